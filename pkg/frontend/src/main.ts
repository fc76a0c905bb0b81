/** Browser entry: wires DOM events to the app and mounts chart previews. */

import { ApiClient } from "./api.js";
import { App, AppState } from "./app.js";
import { renderApp } from "./render.js";

type VegaEmbed = (
  el: HTMLElement,
  spec: Record<string, unknown>,
  opts?: Record<string, unknown>,
) => Promise<unknown>;

const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");

const api = new ApiClient("");
const app = new App(api, paint);

function vegaEmbed(): VegaEmbed | null {
  const fn = (window as unknown as { vegaEmbed?: VegaEmbed }).vegaEmbed;
  return typeof fn === "function" ? fn : null;
}

/** Inject the pasted records into a generated spec; specs name only fields. */
function withData(spec: Record<string, unknown>, state: AppState) {
  return { ...spec, data: { values: state.records ?? [] } };
}

function showText(el: HTMLElement, cls: string, text: string): void {
  el.innerHTML = `<pre class="${cls}"></pre>`;
  el.querySelector("pre")!.textContent = text;
}

function mountChart(el: HTMLElement, state: AppState): void {
  const card = state.cards[Number(el.dataset.card)];
  if (!card) return;
  let spec: Record<string, unknown>;
  try {
    spec = JSON.parse(card.editedSpec) as Record<string, unknown>;
  } catch (e) {
    showText(el, "render-error", String(e)); // invalid edits fail inline
    return;
  }
  const embed = vegaEmbed();
  if (!embed) {
    showText(el, "spec-preview", JSON.stringify(spec, null, 1));
    return;
  }
  // generated specs carry no $schema, so name the dialect explicitly
  embed(el, withData(spec, state), { actions: false, mode: "vega-lite" }).catch(
    (e) => {
      showText(el, "render-error", String(e));
    },
  );
}

function paint(state: AppState): void {
  const focused = document.activeElement as HTMLElement | null;
  if (focused && focused.classList.contains("editor")) {
    // live edit: keep the markup (and the caret), refresh only that chart
    const chart = root!.querySelector<HTMLElement>(
      `.chart[data-card="${focused.dataset.card}"]`,
    );
    if (chart) {
      mountChart(chart, state);
      return;
    }
  }
  root!.innerHTML = renderApp(state);
  for (const el of Array.from(root!.querySelectorAll<HTMLElement>(".chart"))) {
    mountChart(el, state);
  }
}

root.addEventListener("click", (ev) => {
  const target = ev.target as HTMLElement;
  if (target.id === "generate") void app.generate();
  else if (target.id === "random") void app.loadRandomDataset();
  else if (target.classList.contains("dismiss")) app.dismissBanner();
});

root.addEventListener("change", (ev) => {
  const target = ev.target as HTMLSelectElement;
  if (target.id === "beam") app.setBeamWidth(Number(target.value));
});

root.addEventListener("input", (ev) => {
  const target = ev.target as HTMLTextAreaElement;
  if (target.id === "data") app.setDataText(target.value);
  else if (target.classList.contains("editor")) {
    app.editSpec(Number(target.dataset.card), target.value);
  }
});

paint(app.state);
