import init, { align, report } from "./pkg/morphalign_wasm_demo.js";

const $ = (id) => document.getElementById(id);

const SAMPLE_SRC = [
  "yu-huta-me ne-p+-we-'iwa",
  "m+k+ pa:pa ya p+-ta-ti-u-ti-wawi-ri-wa",
  "ne- p+- ka",
  "yu-huta-me p+- ka",
].join("\n");
const SAMPLE_TGT = [
  "tengo dos hermano -s",
  "ella siempre nos pide tortilla -s",
  "yo lo veo",
  "dos lo veo",
].join("\n");

let pairs = [];

function inputs() {
  return [$("src").value, $("tgt").value, $("schedule").value.trim()];
}

function showError(e) {
  $("error").textContent = e ? String(e) : "";
}

function drawCurve(points) {
  const c = $("curve");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  if (points.length < 2) return;
  const ys = points.map((p) => p.log_likelihood).filter(Number.isFinite);
  const lo = Math.min(...ys);
  const hi = Math.max(...ys);
  const pad = 20;
  const x = (k) => pad + (k * (c.width - 2 * pad)) / (points.length - 1);
  const y = (v) => c.height - pad - ((v - lo) / (hi - lo || 1)) * (c.height - 2 * pad);
  ctx.strokeStyle = "#246";
  ctx.beginPath();
  points.forEach((p, k) => (k ? ctx.lineTo(x(k), y(p.log_likelihood)) : ctx.moveTo(x(k), y(p.log_likelihood))));
  ctx.stroke();
  ctx.fillStyle = "#000";
  ctx.font = "11px sans-serif";
  points.forEach((p, k) => {
    if (k === 0 || p.stage !== points[k - 1].stage) ctx.fillText(p.stage, x(k), c.height - 4);
  });
  ctx.fillText(hi.toFixed(2), 2, pad - 6);
  ctx.fillText(lo.toFixed(2), 2, c.height - pad + 12);
}

function drawGrid(pair) {
  const table = document.createElement("table");
  table.className = "grid";
  const head = table.insertRow();
  head.appendChild(document.createElement("th"));
  for (const t of pair.target) {
    const th = document.createElement("th");
    th.className = "tgt";
    th.textContent = t;
    head.appendChild(th);
  }
  ["NULL", ...pair.source].forEach((s, i) => {
    const row = table.insertRow();
    const th = document.createElement("th");
    th.className = "src";
    th.textContent = s;
    row.appendChild(th);
    pair.links.forEach((a) => {
      const td = row.insertCell();
      if (a === i) td.className = "on";
    });
  });
  $("grid").replaceChildren(table);
}

function runAlign() {
  showError();
  try {
    const view = JSON.parse(align(...inputs()));
    pairs = view.pairs;
    drawCurve(view.likelihood);
    $("pair").replaceChildren(
      ...pairs.map((p, k) => new Option(`${p.line_no}: ${p.source.join(" ")}`, k)),
    );
    if (pairs.length) drawGrid(pairs[0]);
  } catch (e) {
    showError(e);
  }
}

function runReport() {
  showError();
  try {
    const top = Math.max(1, parseInt($("top").value, 10) || 10);
    $("report").textContent = report(...inputs(), top, $("nulltgt").checked);
  } catch (e) {
    showError(e);
  }
}

await init();
$("src").value = SAMPLE_SRC;
$("tgt").value = SAMPLE_TGT;
$("align").addEventListener("click", runAlign);
$("report-btn").addEventListener("click", runReport);
$("pair").addEventListener("change", (ev) => drawGrid(pairs[ev.target.value]));
runAlign();
