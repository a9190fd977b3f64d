/** Typed client for the review service's /v1 endpoints.
 *
 * The server owns the blinding: panels arrive with anonymous numbered slots
 * and image URLs only, never model names.
 */

export interface SlotView {
  slot: number;
  image: string;
  p?: number;
}

export interface PanelView {
  id: string;
  original: string;
  slots: SlotView[];
  answered?: boolean;
}

export type SlotChoice = number | "none";

export interface ChoicePayload {
  panel: string;
  slot: SlotChoice;
  description: string;
  reviewer: string;
}

export type SubmitResult =
  | { kind: "recorded" }
  | { kind: "conflict" }
  | { kind: "rejected"; detail: string };

export class ApiError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

export class ReviewApi {
  constructor(
    private readonly base: string = "",
    private readonly fetchFn: typeof fetch = globalThis.fetch.bind(globalThis),
  ) {}

  imageUrl(path: string): string {
    return this.base + path;
  }

  async listPanels(reviewer?: string): Promise<PanelView[]> {
    const query = reviewer ? `?reviewer=${encodeURIComponent(reviewer)}` : "";
    const res = await this.fetchFn(`${this.base}/v1/panels${query}`);
    if (!res.ok) throw new ApiError(`panel list failed (${res.status})`, res.status);
    const body = (await res.json()) as { panels: PanelView[] };
    return body.panels;
  }

  async getPanel(id: string, reviewer?: string): Promise<PanelView> {
    const query = reviewer ? `?reviewer=${encodeURIComponent(reviewer)}` : "";
    const res = await this.fetchFn(`${this.base}/v1/panels/${id}${query}`);
    if (!res.ok) throw new ApiError(`panel ${id} failed (${res.status})`, res.status);
    return (await res.json()) as PanelView;
  }

  /** Submit a choice. Conflicts (already answered) are a result, not an error;
   *  network failures throw so the caller can retain the draft. */
  async submitChoice(choice: ChoicePayload): Promise<SubmitResult> {
    const res = await this.fetchFn(`${this.base}/v1/choices`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(choice),
    });
    if (res.status === 201) return { kind: "recorded" };
    if (res.status === 409) return { kind: "conflict" };
    const detail = await res.text();
    return { kind: "rejected", detail };
  }
}
