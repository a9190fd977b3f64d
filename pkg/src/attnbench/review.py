"""Blinded review HTTP service.

Serves comparison panels with the model identities hidden behind a per-panel
slot permutation (seeded, persisted server-side), collects one choice plus a
free-text description per (reviewer, panel), and exports the survey table with
the slots resolved back to true model labels.  Clients never receive a model
name; only the export resolves them.
"""

from __future__ import annotations

import csv
import io
import json
import threading
import time
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from .gradcam import Panel, load_panels

NONE_CHOICE = "none"
NONE_LABEL = "None"


class ChoiceIn(BaseModel):
    panel: str
    slot: int | str = Field(description="1-based slot number, or 'none'")
    description: str
    reviewer: str


class ReviewStore:
    """Append-only choice log plus the persisted blinding permutations."""

    def __init__(self, store_dir: str | Path, panels: list[Panel], blinding_seed: int = 0):
        self.dir = Path(store_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.choices_path = self.dir / "choices.jsonl"
        self.blinding_path = self.dir / "blinding.json"
        self.panels = {p.sample_id: p for p in panels}
        self.order = sorted(self.panels)
        self._lock = threading.Lock()
        self.blinding = self._load_or_create_blinding(blinding_seed)
        self.choices: dict[tuple[str, str], dict] = {}
        if self.choices_path.exists():
            for line in self.choices_path.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    self.choices[(rec["reviewer"], rec["panel"])] = rec

    def _load_or_create_blinding(self, seed: int) -> dict[str, list[str]]:
        if self.blinding_path.exists():
            blinding = json.loads(self.blinding_path.read_text())
        else:
            blinding = {}
        changed = False
        for pid, panel in self.panels.items():
            labels = [e.model for e in panel.entries]
            if pid in blinding:
                if sorted(blinding[pid]) != sorted(labels):
                    raise ValueError(f"persisted blinding for panel {pid} does not match its models")
                continue
            rng = np.random.default_rng([int(seed), _stable_int(pid)])
            blinding[pid] = [labels[i] for i in rng.permutation(len(labels))]
            changed = True
        if changed:
            self.blinding_path.write_text(json.dumps(blinding, indent=2, sort_keys=True))
        return blinding

    def slot_count(self, pid: str) -> int:
        return len(self.blinding[pid])

    def slot_entry(self, pid: str, slot: int):
        """Panel entry shown at a 1-based blinded slot."""
        label = self.blinding[pid][slot - 1]
        panel = self.panels[pid]
        return next(e for e in panel.entries if e.model == label)

    def add_choice(self, rec: dict) -> None:
        with self._lock:
            key = (rec["reviewer"], rec["panel"])
            if key in self.choices:
                raise KeyError(key)
            with self.choices_path.open("a") as fh:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            self.choices[key] = rec

    def resolved_label(self, rec: dict) -> str:
        if rec["slot"] == NONE_CHOICE:
            return NONE_LABEL
        return self.blinding[rec["panel"]][int(rec["slot"]) - 1]

    def export_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["Column (#)", "Best Model", "Description", "Reviewer", "Panel"])
        records = sorted(self.choices.values(), key=lambda r: (r["panel"], r["reviewer"]))
        ordinal = {pid: i + 1 for i, pid in enumerate(self.order)}
        for rec in records:
            writer.writerow([ordinal[rec["panel"]], self.resolved_label(rec),
                             rec["description"], rec["reviewer"], rec["panel"]])
        return buf.getvalue()


def _stable_int(text: str) -> int:
    # process-independent hash for seeding (hash() is salted per process)
    out = 0
    for ch in text.encode():
        out = (out * 131 + ch) % (2 ** 31)
    return out


def create_app(panels_dir: str | Path, store_dir: str | Path,
               show_probabilities: bool = False, blinding_seed: int = 0,
               ui_dir: str | Path | None = None) -> FastAPI:
    panels_dir = Path(panels_dir)
    panels = load_panels(panels_dir / "panels.jsonl")
    store = ReviewStore(store_dir, panels, blinding_seed=blinding_seed)
    app = FastAPI(title="blinded review service", version="1")
    app.state.store = store

    def _panel_or_404(pid: str) -> Panel:
        panel = store.panels.get(pid)
        if panel is None:
            raise HTTPException(status_code=404, detail=f"unknown panel {pid!r}")
        return panel

    def _panel_payload(pid: str, reviewer: str | None) -> dict:
        slots = []
        for slot in range(1, store.slot_count(pid) + 1):
            entry = {"slot": slot, "image": f"/v1/panels/{pid}/slots/{slot}"}
            if show_probabilities:
                entry["p"] = store.slot_entry(pid, slot).probability
            slots.append(entry)
        payload = {"id": pid, "original": f"/v1/panels/{pid}/original", "slots": slots}
        if reviewer is not None:
            payload["answered"] = (reviewer, pid) in store.choices
        return payload

    @app.get("/v1/panels")
    def list_panels(reviewer: str | None = None):
        return {"panels": [_panel_payload(pid, reviewer) for pid in store.order]}

    @app.get("/v1/panels/{pid}")
    def get_panel(pid: str, reviewer: str | None = None):
        _panel_or_404(pid)
        return _panel_payload(pid, reviewer)

    def _png(path: Path) -> Response:
        return Response(content=path.read_bytes(), media_type="image/png")

    @app.get("/v1/panels/{pid}/original")
    def get_original(pid: str):
        return _png(panels_dir / _panel_or_404(pid).original)

    @app.get("/v1/panels/{pid}/slots/{slot}")
    def get_slot(pid: str, slot: int):
        _panel_or_404(pid)
        if not 1 <= slot <= store.slot_count(pid):
            raise HTTPException(status_code=404, detail=f"panel {pid} has no slot {slot}")
        return _png(panels_dir / store.slot_entry(pid, slot).file)

    @app.post("/v1/choices", status_code=201)
    def post_choice(choice: ChoiceIn):
        _panel_or_404(choice.panel)
        if not choice.description.strip():
            raise HTTPException(status_code=422, detail="description must be non-empty")
        if not choice.reviewer.strip():
            raise HTTPException(status_code=422, detail="reviewer must be non-empty")
        slot = choice.slot
        if isinstance(slot, str):
            if slot != NONE_CHOICE:
                raise HTTPException(status_code=422,
                                    detail=f"slot must be 1..{store.slot_count(choice.panel)} or 'none'")
        elif not 1 <= slot <= store.slot_count(choice.panel):
            raise HTTPException(status_code=422,
                                detail=f"slot must be 1..{store.slot_count(choice.panel)} or 'none'")
        rec = {"panel": choice.panel, "slot": slot,
               "description": choice.description, "reviewer": choice.reviewer,
               "timestamp": time.time()}
        try:
            store.add_choice(rec)
        except KeyError:
            raise HTTPException(status_code=409,
                                detail=f"reviewer {choice.reviewer!r} already answered panel {choice.panel!r}")
        return {"status": "recorded", "panel": choice.panel}

    @app.get("/v1/export")
    def export():
        return Response(content=store.export_csv(), media_type="text/csv")

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def serve(panels_dir: str | Path, store_dir: str | Path, port: int = 8000,
          host: str = "127.0.0.1", **kwargs) -> None:
    import uvicorn
    app = create_app(panels_dir, store_dir, **kwargs)
    uvicorn.run(app, host=host, port=port, log_level="warning")
