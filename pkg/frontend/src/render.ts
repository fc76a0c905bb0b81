/** HTML renderer: state in, markup out. Charts mount in a second pass. */

import { AppState, Card, badgeFor, BEAM_WIDTHS } from "./app.js";

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function badgeLabel(card: Card): string {
  const c = card.raw;
  if (c.phantom_fields.length > 0) return `phantom: ${c.phantom_fields.join(", ")}`;
  if (!c.language_valid) return "not JSON";
  if (!c.visualization_valid) return "not plotable";
  return "valid";
}

export function renderCard(card: Card, index: number): string {
  const badge = badgeFor(card.raw);
  const copies = card.copies > 1 ? ` <span class="copies">x${card.copies}</span>` : "";
  return `<article class="card" data-card="${index}">
  <div class="chart" data-card="${index}"></div>
  <footer>
    <span class="badge badge-${badge}">${escapeHtml(badgeLabel(card))}</span>
    <span class="score">score ${card.raw.score.toFixed(4)}</span>${copies}
  </footer>
  <textarea class="editor" data-card="${index}" rows="6" spellcheck="false">${escapeHtml(card.editedSpec)}</textarea>
</article>`;
}

export function renderApp(state: AppState): string {
  const options = BEAM_WIDTHS.map(
    (w) =>
      `<option value="${w}"${w === state.beamWidth ? " selected" : ""}>k = ${w}</option>`,
  ).join("");
  const banner = state.banner
    ? `<div class="banner" role="alert">${escapeHtml(state.banner)}
       <button class="dismiss" type="button">dismiss</button></div>`
    : "";
  const status =
    state.phase === "loading"
      ? `<p class="status">decoding…</p>`
      : state.cards.length
        ? `<p class="status">${state.cards.length} candidate${state.cards.length === 1 ? "" : "s"}` +
          (state.rawCandidates.length !== state.cards.length
            ? ` (${state.rawCandidates.length} beams, duplicates collapsed)`
            : "") +
          (state.datasetName ? ` for ${escapeHtml(state.datasetName)}` : "") +
          `</p>`
        : "";
  const cards = state.cards.map(renderCard).join("\n");
  return `<header>
  <h1>chart candidates</h1>
  <p class="sub">paste a JSON array of records, pick a beam width, generate</p>
</header>
${banner}
<section class="controls">
  <textarea id="data" rows="8" spellcheck="false" placeholder='[{"height": 58, "weight": 115}, …]'>${escapeHtml(state.dataText)}</textarea>
  <div class="buttons">
    <button id="random" type="button">load random dataset</button>
    <select id="beam" aria-label="beam width">${options}</select>
    <button id="generate" type="button"${state.phase === "loading" ? " disabled" : ""}>generate</button>
  </div>
</section>
${status}
<section class="cards">
${cards}
</section>`;
}
