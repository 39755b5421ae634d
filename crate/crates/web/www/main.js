// Generated by `wasm-bindgen --target web` into ./pkg (see README).
import init, { catalog, render_trial, simulate, wilson } from "./pkg/bias_probe_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function show(el, fn) {
  try {
    fn();
    el.classList.remove("err");
  } catch (e) {
    el.textContent = String(e.message ?? e);
    el.classList.add("err");
  }
}

function fillSelect(el, items) {
  el.innerHTML = "";
  for (const [value, text] of items) {
    const o = document.createElement("option");
    o.value = value;
    o.textContent = text;
    el.appendChild(o);
  }
}

function renderTrial() {
  const out = $("t-out");
  show(out, () => {
    const t = JSON.parse(render_trial($("t-cat").value, $("t-phase").value, $("t-tpl").value, num("t-rep"), num("t-seed")));
    out.textContent = `trial ${t.trial_id}\n\n${t.prompt}`;
  });
}

function runSimulation() {
  const summary = $("s-summary");
  show(summary, () => {
    const r = JSON.parse(simulate(num("s-imp"), num("s-exp"), num("s-inv"), num("s-seed"), num("s-reps")));
    summary.textContent = `${r.trials} trials, ${r.exchanges} model calls (invalid replies get one retry).`;
    $("s-chart").innerHTML = r.svg;
    const rows = r.scores.map((s) =>
      `<tr><td>${s.category}</td><td>${s.phase}</td><td>${s.n_stereotype}/${s.n_total}</td>` +
      `<td>${s.n_invalid}</td><td>${s.sc.toFixed(2)}</td><td>[${s.ci_low.toFixed(3)}, ${s.ci_high.toFixed(3)}]</td></tr>`);
    const avg = r.averages.map((a) => `<tr><td>average</td><td>${a.phase}</td><td></td><td></td><td>${a.mean_sc.toFixed(2)}</td><td></td></tr>`);
    $("s-table").innerHTML =
      "<tr><th>category</th><th>phase</th><th>stereotypical</th><th>invalid</th><th>SC</th><th>95% CI</th></tr>" +
      rows.join("") + avg.join("");
  });
}

function updateWilson() {
  const out = $("w-out");
  show(out, () => {
    const [lo, hi] = wilson(num("w-k"), num("w-n"), num("w-level"));
    const p = num("w-k") / num("w-n");
    out.textContent = `SC = ${p.toFixed(3)}, interval [${lo.toFixed(4)}, ${hi.toFixed(4)}], width ${(hi - lo).toFixed(4)}`;
  });
}

await init();
const cat = JSON.parse(catalog());
fillSelect($("t-cat"), cat.categories.map((c) => [c.id, c.name]));
fillSelect($("t-tpl"), cat.templates.map((t) => [t, t]));
$("t-go").addEventListener("click", renderTrial);
$("s-go").addEventListener("click", runSimulation);
for (const id of ["w-k", "w-n", "w-level"]) $(id).addEventListener("input", updateWilson);
renderTrial();
updateWilson();
