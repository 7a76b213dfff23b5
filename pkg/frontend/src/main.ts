/** DOM wiring: three item cards, click or keys 1/2/3 to select, submit,
 * progress bar, completion and error screens. */

import { ApiClient } from "./api.js";
import { AnnotationFlow } from "./flow.js";

const baseUrl = new URLSearchParams(window.location.search).get("api") ?? "";
const flow = new AnnotationFlow(new ApiClient(baseUrl));

const app = document.getElementById("app")!;

function render(): void {
  const s = flow.state;
  const pct = Math.round(100 * flow.progressFraction());
  const bar = `
    <div class="progress">
      <div class="progress-fill" style="width:${pct}%"></div>
      <span class="progress-text">${flow.answered} / ${flow.target}</span>
    </div>`;

  if (s.kind === "loading") {
    app.innerHTML = `${bar}<p class="status">Loading…</p>`;
    return;
  }
  if (s.kind === "complete") {
    app.innerHTML = `${bar}
      <div class="done">
        <h2>All done</h2>
        <p>You answered ${flow.answered} of ${flow.target} tests. Thank you!</p>
      </div>`;
    return;
  }
  if (s.kind === "error") {
    app.innerHTML = `${bar}
      <div class="banner">
        <p>Connection problem: ${escapeHtml(s.message)}</p>
        <button id="retry">Retry</button>
      </div>`;
    document.getElementById("retry")!.addEventListener("click", () => {
      flow.state = { kind: "loading" };
      void flow.start(flow.token || undefined);
    });
    return;
  }

  const cards = s.items
    .map(
      (item, i) => `
      <div class="card ${s.selected === i ? "selected" : ""}" data-index="${i}">
        <img src="${item.thumb_url}" alt="${escapeHtml(item.sample_id)}" draggable="false">
        <div class="card-label">
          <kbd>${i + 1}</kbd> ${escapeHtml(item.sample_id)}
        </div>
      </div>`,
    )
    .join("");
  app.innerHTML = `${bar}
    <p class="prompt">Pick the <strong>most dissimilar</strong> item.</p>
    <div class="cards">${cards}</div>
    <button id="submit" ${flow.canSubmit() ? "" : "disabled"}>Submit</button>`;

  for (const el of app.querySelectorAll<HTMLElement>(".card")) {
    el.addEventListener("click", () => flow.select(Number(el.dataset.index)));
  }
  document.getElementById("submit")!.addEventListener("click", () => void flow.submit());
}

function escapeHtml(s: string): string {
  return s.replace(/[&<>"']/g, (c) => `&#${c.charCodeAt(0)};`);
}

document.addEventListener("keydown", (ev) => {
  if (ev.key >= "1" && ev.key <= "3") {
    flow.select(Number(ev.key) - 1);
  } else if (ev.key === "Enter" && flow.canSubmit()) {
    void flow.submit();
  }
});

flow.onChange(render);
render();
void flow.start();
