/** Contract tests against recorded service responses. No model, no network:
 * a fake fetch replays the fixtures and records what the client sent.
 */

import { describe, expect, it } from "vitest";
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { ApiClient, ApiError, Candidate, GenerateResponse } from "../src/api.js";
import {
  App,
  BEAM_WIDTHS,
  DEFAULT_BEAM_WIDTH,
  badgeFor,
  dedupeForDisplay,
  parseRecords,
} from "../src/app.js";
import { renderApp, renderCard } from "../src/render.js";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(join(FIXTURES, name), "utf-8")) as T;
}

const GENERATE = fixture<GenerateResponse>("generate_k15.json");
const RANDOM = fixture<{ name: string; data: Record<string, unknown>[] }>(
  "random_dataset.json",
);

interface RecordedCall {
  path: string;
  init?: RequestInit;
}

/** Replays canned JSON bodies and honors AbortSignal like a real fetch. */
function fakeFetch(
  routes: Record<string, () => { status: number; body: unknown } | Promise<{ status: number; body: unknown }>>,
  calls: RecordedCall[],
): typeof fetch {
  return (async (input: RequestInfo | URL, init?: RequestInit) => {
    const path = String(input);
    calls.push({ path, init });
    const route = routes[path];
    if (!route) throw new TypeError(`fetch failed: no route for ${path}`);
    const result = await new Promise<{ status: number; body: unknown }>(
      (resolve, reject) => {
        const signal = init?.signal;
        if (signal?.aborted) {
          reject(new DOMException("aborted", "AbortError"));
          return;
        }
        signal?.addEventListener("abort", () =>
          reject(new DOMException("aborted", "AbortError")),
        );
        Promise.resolve(route()).then(resolve, reject);
      },
    );
    return new Response(JSON.stringify(result.body), {
      status: result.status,
      headers: { "content-type": "application/json" },
    });
  }) as typeof fetch;
}

function appWith(
  routes: Parameters<typeof fakeFetch>[0],
): { app: App; calls: RecordedCall[]; paints: number[] } {
  const calls: RecordedCall[] = [];
  const paints: number[] = [];
  const api = new ApiClient("", fakeFetch(routes, calls));
  const app = new App(api, (state) => paints.push(state.renderCount));
  return { app, calls, paints };
}

const WOMEN_TEXT = JSON.stringify(RANDOM.data);

describe("recorded generate response", () => {
  it("renders one card per candidate at k=15", async () => {
    const { app } = appWith({
      "/generate": () => ({ status: 200, body: GENERATE }),
    });
    app.setDataText(WOMEN_TEXT);
    await app.generate();

    expect(GENERATE.candidates.length).toBe(15);
    const unique = new Set(GENERATE.candidates.map((c) => c.spec_text)).size;
    expect(app.state.cards.length).toBe(unique);
    expect(app.state.rawCandidates.length).toBe(15);

    const html = renderApp(app.state);
    const cardCount = (html.match(/<article class="card"/g) ?? []).length;
    expect(cardCount).toBe(unique);
  });

  it("sends the chosen beam width and the pasted records", async () => {
    const { app, calls } = appWith({
      "/generate": () => ({ status: 200, body: GENERATE }),
    });
    app.setDataText(WOMEN_TEXT);
    app.setBeamWidth(5);
    await app.generate();

    const sent = JSON.parse(String(calls[0].init?.body));
    expect(sent.beam_width).toBe(5);
    expect(sent.data).toEqual(RANDOM.data);
  });

  it("keeps every raw beam result while collapsing duplicate texts", () => {
    const twice = [...GENERATE.candidates, GENERATE.candidates[0]];
    const display = dedupeForDisplay(twice);
    const unique = new Set(twice.map((c) => c.spec_text)).size;
    expect(display.length).toBe(unique);
    expect(display[0].copies).toBeGreaterThanOrEqual(2);
    expect(twice.length).toBe(GENERATE.candidates.length + 1);
  });
});

describe("badges derive solely from service flags", () => {
  const base: Candidate = {
    spec_text: "this is not even json",
    score: -1.0,
    language_valid: false,
    visualization_valid: false,
    phantom_fields: [],
  };

  it("is green exactly when plotable with no phantom fields", () => {
    expect(badgeFor({ ...base, visualization_valid: true })).toBe("green");
    expect(badgeFor(base)).toBe("orange");
    expect(
      badgeFor({
        ...base,
        visualization_valid: true,
        phantom_fields: ["wingspan"],
      }),
    ).toBe("orange");
  });

  it("trusts the flags even when the text disagrees", () => {
    // nonsense text, but the service said plotable: the client must not
    // second-guess it
    expect(badgeFor({ ...base, visualization_valid: true })).toBe("green");
  });

  it("shows phantom fields on the orange badge", () => {
    const phantom: Candidate = {
      ...base,
      language_valid: true,
      visualization_valid: true,
      phantom_fields: ["wingspan"],
    };
    const html = renderCard(
      { raw: phantom, copies: 1, editedSpec: phantom.spec_text },
      0,
    );
    expect(html).toContain("badge-orange");
    expect(html).toContain("phantom: wingspan");
  });

  it("marks recorded candidates consistently with their flags", () => {
    for (const c of GENERATE.candidates) {
      const want =
        c.visualization_valid && c.phantom_fields.length === 0
          ? "badge-green"
          : "badge-orange";
      const html = renderCard({ raw: c, copies: 1, editedSpec: c.spec_text }, 0);
      expect(html).toContain(want);
    }
  });
});

describe("client-side data guard", () => {
  it("rejects malformed JSON before any request", async () => {
    const { app, calls } = appWith({
      "/generate": () => ({ status: 200, body: GENERATE }),
    });
    app.setDataText("{not json");
    await app.generate();
    expect(calls.length).toBe(0);
    expect(app.state.banner).toMatch(/not valid JSON/);
  });

  it.each([
    ["\"a string\"", /array/],
    ["[]", /empty/],
    ["[1, 2]", /object/],
    ["[{\"a\": 1}, null]", /object/],
  ])("rejects %s client-side", async (text, pattern) => {
    const { app, calls } = appWith({});
    app.setDataText(text);
    await app.generate();
    expect(calls.length).toBe(0);
    expect(app.state.banner).toMatch(pattern);
  });

  it("accepts a well-formed array of records", () => {
    const parsed = parseRecords(WOMEN_TEXT);
    expect(parsed.ok).toBe(true);
  });
});

describe("editing a spec re-renders in the session", () => {
  it("repaints with the edited text", async () => {
    const { app, paints } = appWith({
      "/generate": () => ({ status: 200, body: GENERATE }),
    });
    app.setDataText(WOMEN_TEXT);
    await app.generate();
    const before = paints.length;

    app.editSpec(0, "{\"mark\":\"bar\"}");
    expect(paints.length).toBe(before + 1);
    expect(app.state.cards[0].editedSpec).toBe("{\"mark\":\"bar\"}");
    expect(renderApp(app.state)).toContain("&quot;bar&quot;");
    // the service's verdict on the original candidate is untouched
    expect(app.state.cards[0].raw.spec_text).toBe(
      GENERATE.candidates[0].spec_text,
    );
  });
});

describe("request lifecycle", () => {
  it("cancels the older generate when a newer one starts", async () => {
    const releases: Array<() => void> = [];
    const slowThenFast = [
      () =>
        new Promise<{ status: number; body: unknown }>((resolve) => {
          releases.push(() => resolve({ status: 200, body: GENERATE }));
        }),
      () => ({ status: 200, body: GENERATE }),
    ];
    const { app, calls } = appWith({
      "/generate": () => slowThenFast.shift()!(),
    });
    app.setDataText(WOMEN_TEXT);

    const first = app.generate();
    const second = app.generate();
    await Promise.all([first, second]);

    expect(calls.length).toBe(2);
    expect(calls[0].init?.signal?.aborted).toBe(true);
    expect(app.state.cards.length).toBeGreaterThan(0);
    expect(app.state.phase).toBe("idle");
    for (const r of releases) r(); // settle the stalled fake response
  });

  it("surfaces service errors as a dismissible banner", async () => {
    const { app } = appWith({
      "/generate": () => ({
        status: 413,
        body: { detail: "row normalizes to more than 500 characters" },
      }),
    });
    app.setDataText(WOMEN_TEXT);
    await app.generate();
    expect(app.state.banner).toMatch(/413/);
    expect(app.state.banner).toMatch(/500 characters/);
    app.dismissBanner();
    expect(app.state.banner).toBeNull();
  });

  it("surfaces network failures as a banner", async () => {
    const { app } = appWith({}); // no routes: fetch rejects
    app.setDataText(WOMEN_TEXT);
    await app.generate();
    expect(app.state.banner).toMatch(/fetch failed/);
  });
});

describe("dataset loading", () => {
  it("fills the textarea from the recorded random dataset", async () => {
    const { app } = appWith({
      "/datasets/random": () => ({ status: 200, body: RANDOM }),
    });
    await app.loadRandomDataset();
    expect(app.state.datasetName).toBe(RANDOM.name);
    expect(JSON.parse(app.state.dataText)).toEqual(RANDOM.data);
  });
});

describe("beam width selector", () => {
  it("offers the documented widths and defaults to 15", () => {
    expect([...BEAM_WIDTHS]).toEqual([1, 5, 10, 15, 20]);
    expect(DEFAULT_BEAM_WIDTH).toBe(15);
    const { app } = appWith({});
    expect(app.state.beamWidth).toBe(15);
    app.setBeamWidth(7); // not offered: ignored
    expect(app.state.beamWidth).toBe(15);
    app.setBeamWidth(20);
    expect(app.state.beamWidth).toBe(20);
  });

  it("renders every width as an option with the current one selected", () => {
    const { app } = appWith({});
    const html = renderApp(app.state);
    for (const w of BEAM_WIDTHS) expect(html).toContain(`value="${w}"`);
    expect(html).toMatch(/value="15" selected/);
  });
});

describe("api client", () => {
  it("raises a typed error with the service detail", async () => {
    const calls: RecordedCall[] = [];
    const api = new ApiClient(
      "",
      fakeFetch(
        { "/generate": () => ({ status: 400, body: { detail: "beam_width must be in [1, 64]" } }) },
        calls,
      ),
    );
    await expect(
      api.generate({ data: [{ a: 1 }], beam_width: 0 }),
    ).rejects.toMatchObject({
      name: "ApiError",
      status: 400,
      detail: "beam_width must be in [1, 64]",
    } satisfies Partial<ApiError>);
  });
});
