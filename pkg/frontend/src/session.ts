/** Review session state machine: a queue of unanswered panels, one draft per
 * panel, and the submit workflow.
 *
 * Invariants:
 *  - submission is possible only with a selected slot (or "none") and a
 *    non-empty description;
 *  - a network failure keeps the draft so it can be resubmitted;
 *  - a conflict (panel answered elsewhere) is surfaced, never overwritten;
 *  - skipping rotates the queue without losing the draft.
 */

import { ChoicePayload, PanelView, ReviewApi, SlotChoice } from "./api.js";

export interface Draft {
  slot: SlotChoice | null;
  description: string;
}

export type SubmitOutcome = "advanced" | "conflict" | "retained" | "invalid" | "done";

const emptyDraft = (): Draft => ({ slot: null, description: "" });

export class ReviewSession {
  private queue: PanelView[] = [];
  private total = 0;
  private drafts = new Map<string, Draft>();
  lastError: string | null = null;

  constructor(
    private readonly api: ReviewApi,
    readonly reviewer: string,
  ) {
    if (!reviewer.trim()) throw new Error("reviewer id must be non-empty");
  }

  /** Fetch panels and rebuild the unanswered queue. Stateless on the server
   * side, so a page refresh restores exactly the remaining work. */
  async load(): Promise<void> {
    const panels = await this.api.listPanels(this.reviewer);
    this.total = panels.length;
    this.queue = panels.filter((p) => !p.answered);
  }

  get current(): PanelView | null {
    return this.queue[0] ?? null;
  }

  get remaining(): number {
    return this.queue.length;
  }

  get progress(): { answered: number; total: number } {
    return { answered: this.total - this.queue.length, total: this.total };
  }

  get done(): boolean {
    return this.total > 0 && this.queue.length === 0;
  }

  draft(): Draft {
    const panel = this.current;
    if (!panel) return emptyDraft();
    let d = this.drafts.get(panel.id);
    if (!d) {
      d = emptyDraft();
      this.drafts.set(panel.id, d);
    }
    return d;
  }

  select(slot: SlotChoice): void {
    const panel = this.current;
    if (!panel) return;
    if (slot !== "none" && !panel.slots.some((s) => s.slot === slot)) {
      throw new Error(`panel ${panel.id} has no slot ${slot}`);
    }
    this.draft().slot = slot;
  }

  setDescription(text: string): void {
    this.draft().description = text;
  }

  get canSubmit(): boolean {
    const d = this.draft();
    return this.current !== null && d.slot !== null && d.description.trim().length > 0;
  }

  /** Rotate the current panel to the back of the queue, keeping its draft. */
  skip(): void {
    const panel = this.queue.shift();
    if (panel) this.queue.push(panel);
  }

  async submit(): Promise<SubmitOutcome> {
    const panel = this.current;
    if (!panel) return "done";
    if (!this.canSubmit) return "invalid";
    const d = this.draft();
    const payload: ChoicePayload = {
      panel: panel.id,
      slot: d.slot as SlotChoice,
      description: d.description.trim(),
      reviewer: this.reviewer,
    };
    let result;
    try {
      result = await this.api.submitChoice(payload);
    } catch {
      this.lastError = "network failure; your answer is kept locally, submit again";
      return "retained";
    }
    if (result.kind === "recorded") {
      this.lastError = null;
      this.drafts.delete(panel.id);
      this.queue.shift();
      return this.queue.length === 0 ? "done" : "advanced";
    }
    if (result.kind === "conflict") {
      // answered elsewhere: surface it and drop the panel from the queue
      this.lastError = `panel ${panel.id} was already answered under reviewer "${this.reviewer}"`;
      this.drafts.delete(panel.id);
      this.queue.shift();
      return "conflict";
    }
    this.lastError = result.detail;
    return "retained";
  }
}
