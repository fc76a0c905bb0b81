/** UI state machine. Pure logic: no DOM access, no validity computation.
 *
 * Badges are a function of the service's flags alone. The client's only
 * judgment call is the pre-flight JSON guard on pasted data.
 */

import { ApiClient, Candidate, GenerateResponse, SchemaField } from "./api.js";

export const BEAM_WIDTHS = [1, 5, 10, 15, 20] as const;
export const DEFAULT_BEAM_WIDTH = 15;

export type Badge = "green" | "orange";

export function badgeFor(candidate: Candidate): Badge {
  return candidate.visualization_valid && candidate.phantom_fields.length === 0
    ? "green"
    : "orange";
}

export type ParsedRecords =
  | { ok: true; records: Record<string, unknown>[] }
  | { ok: false; error: string };

/** Client-side guard: a dataset is a non-empty JSON array of flat objects. */
export function parseRecords(text: string): ParsedRecords {
  let value: unknown;
  try {
    value = JSON.parse(text);
  } catch (e) {
    return { ok: false, error: `not valid JSON: ${(e as Error).message}` };
  }
  if (!Array.isArray(value)) return { ok: false, error: "expected a JSON array of records" };
  if (value.length === 0) return { ok: false, error: "data array is empty" };
  for (const row of value) {
    if (typeof row !== "object" || row === null || Array.isArray(row)) {
      return { ok: false, error: "every record must be a JSON object" };
    }
  }
  return { ok: true, records: value as Record<string, unknown>[] };
}

export interface DisplayCandidate {
  candidate: Candidate;
  /** how many raw beam results shared this exact text */
  copies: number;
}

/** Collapse repeated texts for display; the raw response stays untouched. */
export function dedupeForDisplay(candidates: Candidate[]): DisplayCandidate[] {
  const seen = new Map<string, DisplayCandidate>();
  const out: DisplayCandidate[] = [];
  for (const c of candidates) {
    const hit = seen.get(c.spec_text);
    if (hit) {
      hit.copies += 1;
    } else {
      const entry = { candidate: c, copies: 1 };
      seen.set(c.spec_text, entry);
      out.push(entry);
    }
  }
  return out;
}

export interface Card {
  raw: Candidate;
  copies: number;
  /** current editor content; starts as the candidate's spec text */
  editedSpec: string;
}

export interface AppState {
  dataText: string;
  records: Record<string, unknown>[] | null;
  datasetName: string;
  beamWidth: number;
  phase: "idle" | "loading";
  banner: string | null;
  cards: Card[];
  rawCandidates: Candidate[];
  schema: SchemaField[];
  checkpointId: string;
  /** bumped on every visible change so renderers and tests can count paints */
  renderCount: number;
}

export class App {
  state: AppState = {
    dataText: "",
    records: null,
    datasetName: "",
    beamWidth: DEFAULT_BEAM_WIDTH,
    phase: "idle",
    banner: null,
    cards: [],
    rawCandidates: [],
    schema: [],
    checkpointId: "",
    renderCount: 0,
  };

  private inflight: AbortController | null = null;

  constructor(
    private api: ApiClient,
    private onRender: (state: AppState) => void = () => {},
  ) {}

  private render(): void {
    this.state.renderCount += 1;
    this.onRender(this.state);
  }

  setDataText(text: string): void {
    this.state.dataText = text;
    this.state.datasetName = "";
  }

  setBeamWidth(width: number): void {
    if ((BEAM_WIDTHS as readonly number[]).includes(width)) {
      this.state.beamWidth = width;
      this.render();
    }
  }

  dismissBanner(): void {
    this.state.banner = null;
    this.render();
  }

  async loadRandomDataset(): Promise<void> {
    try {
      const ds = await this.api.randomDataset();
      this.state.dataText = JSON.stringify(ds.data, null, 1);
      this.state.records = ds.data;
      this.state.datasetName = ds.name;
      this.state.banner = null;
    } catch (e) {
      this.state.banner = (e as Error).message;
    }
    this.render();
  }

  /** Validate pasted data and decode candidates. Newer calls cancel older. */
  async generate(): Promise<void> {
    const parsed = parseRecords(this.state.dataText);
    if (!parsed.ok) {
      this.state.banner = parsed.error;
      this.render();
      return;
    }
    this.state.records = parsed.records;

    this.inflight?.abort();
    const controller = new AbortController();
    this.inflight = controller;
    this.state.phase = "loading";
    this.state.banner = null;
    this.render();

    let response: GenerateResponse;
    try {
      response = await this.api.generate(
        { data: parsed.records, beam_width: this.state.beamWidth },
        controller.signal,
      );
    } catch (e) {
      if ((e as Error).name === "AbortError") return; // superseded
      if (controller === this.inflight) {
        this.state.phase = "idle";
        this.state.banner = (e as Error).message;
        this.render();
      }
      return;
    }
    if (controller !== this.inflight) return; // a newer request took over

    this.inflight = null;
    this.state.phase = "idle";
    this.state.rawCandidates = response.candidates;
    this.state.schema = response.schema;
    this.state.checkpointId = response.checkpoint_id;
    this.state.cards = dedupeForDisplay(response.candidates).map((d) => ({
      raw: d.candidate,
      copies: d.copies,
      editedSpec: d.candidate.spec_text,
    }));
    this.render();
  }

  /** Live editing: update one card's spec and repaint. */
  editSpec(cardIndex: number, text: string): void {
    const card = this.state.cards[cardIndex];
    if (!card) return;
    card.editedSpec = text;
    this.render();
  }
}
