/** Framework-free DOM layer: renders the current panel, wires selection,
 * description, keyboard shortcuts, and the synchronized zoom. */

import { ReviewApi, SlotChoice } from "./api.js";
import { ReviewSession } from "./session.js";

export class ReviewView {
  private zoom = 1.0;

  constructor(
    private readonly root: HTMLElement,
    private readonly api: ReviewApi,
    private readonly session: ReviewSession,
  ) {}

  async start(): Promise<void> {
    await this.session.load();
    this.render();
    document.addEventListener("keydown", (ev) => this.onKey(ev));
  }

  private onKey(ev: KeyboardEvent): void {
    if (ev.target instanceof HTMLTextAreaElement || ev.target instanceof HTMLInputElement) {
      return; // let typing be typing
    }
    const panel = this.session.current;
    if (!panel) return;
    const digit = Number.parseInt(ev.key, 10);
    if (!Number.isNaN(digit) && panel.slots.some((s) => s.slot === digit)) {
      this.select(digit);
    } else if (ev.key === "n") {
      this.select("none");
    } else if (ev.key === "Enter" && this.session.canSubmit) {
      void this.submit();
    }
  }

  private select(slot: SlotChoice): void {
    this.session.select(slot);
    this.render();
  }

  private async submit(): Promise<void> {
    const outcome = await this.session.submit();
    if (outcome === "advanced" || outcome === "conflict" || outcome === "done") {
      this.zoom = 1.0;
    }
    this.render();
  }

  render(): void {
    const panel = this.session.current;
    this.root.textContent = "";
    this.root.appendChild(this.header());
    if (this.session.lastError) {
      const notice = el("div", "notice");
      notice.textContent = this.session.lastError;
      this.root.appendChild(notice);
    }
    if (!panel) {
      const done = el("div", "done");
      done.textContent = this.session.done
        ? "All panels answered. Thank you!"
        : "No panels to review.";
      this.root.appendChild(done);
      return;
    }
    this.root.appendChild(this.imageRow());
    this.root.appendChild(this.form());
  }

  private header(): HTMLElement {
    const { answered, total } = this.session.progress;
    const h = el("header");
    const title = el("h1");
    title.textContent = "Blinded heatmap review";
    const progress = el("span", "progress");
    progress.textContent = `${answered} / ${total} answered`;
    const zoomOut = button("zoom-", "−");
    zoomOut.addEventListener("click", () => this.setZoom(this.zoom / 1.25));
    const zoomIn = button("zoom+", "+");
    zoomIn.addEventListener("click", () => this.setZoom(this.zoom * 1.25));
    h.append(title, progress, zoomOut, zoomIn);
    return h;
  }

  private setZoom(z: number): void {
    this.zoom = Math.min(4, Math.max(0.5, z));
    for (const img of this.root.querySelectorAll<HTMLImageElement>("img.panel-img")) {
      img.style.width = `${this.zoom * 100}%`;
    }
  }

  private imageRow(): HTMLElement {
    const panel = this.session.current!;
    const draft = this.session.draft();
    const row = el("div", "image-row");
    row.appendChild(this.cell("original", this.api.imageUrl(panel.original), null));
    for (const slot of panel.slots) {
      const label = `Model ${slot.slot}`;
      const cell = this.cell(label, this.api.imageUrl(slot.image), slot.slot);
      if (draft.slot === slot.slot) cell.classList.add("selected");
      if (slot.p !== undefined) {
        const p = el("div", "prob");
        p.textContent = `P=${(100 * slot.p).toFixed(1)}%`;
        cell.appendChild(p);
      }
      row.appendChild(cell);
    }
    return row;
  }

  private cell(label: string, url: string, slot: number | null): HTMLElement {
    const cell = el("figure", "cell");
    const img = document.createElement("img");
    img.className = "panel-img";
    img.src = url;
    img.alt = label;
    img.style.width = `${this.zoom * 100}%`;
    const caption = el("figcaption");
    caption.textContent = label;
    cell.append(img, caption);
    if (slot !== null) {
      cell.tabIndex = 0;
      cell.dataset.slot = String(slot);
      cell.addEventListener("click", () => this.select(slot));
    }
    return cell;
  }

  private form(): HTMLElement {
    const draft = this.session.draft();
    const form = el("div", "choice-form");

    const noneBtn = button("choose-none", "None of the models");
    if (draft.slot === "none") noneBtn.classList.add("selected");
    noneBtn.addEventListener("click", () => this.select("none"));

    const desc = document.createElement("textarea");
    desc.id = "description";
    desc.placeholder = "Which model focuses on the most important region? "
      + "Explain in condensed clinical terminology (required).";
    desc.value = draft.description;
    desc.addEventListener("input", () => {
      this.session.setDescription(desc.value);
      submit.disabled = !this.session.canSubmit;
    });

    const submit = button("submit", "Submit");
    submit.disabled = !this.session.canSubmit;
    submit.addEventListener("click", () => void this.submit());

    const skip = button("skip", "Skip for now");
    skip.addEventListener("click", () => {
      this.session.skip();
      this.render();
    });

    form.append(noneBtn, desc, submit, skip);
    return form;
  }
}

function el(tag: string, className?: string): HTMLElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  return node;
}

function button(id: string, label: string): HTMLButtonElement {
  const b = document.createElement("button");
  b.id = id;
  b.type = "button";
  b.textContent = label;
  return b;
}
