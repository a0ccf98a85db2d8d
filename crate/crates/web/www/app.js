import init, { spectrum, flow, critical } from "./pkg/dyson_rg_web.js";

const GRID_N = 512;
const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function guarded(out, f) {
  try {
    out.classList.remove("error");
    f();
  } catch (e) {
    out.classList.add("error");
    out.textContent = String(e.message ?? e);
  }
}

function runSpectrum() {
  const out = $("sp-out");
  guarded(out, () => {
    const r = JSON.parse(spectrum(num("sp-a"), num("sp-k"), 2048));
    const rows = r.eigenvalues.map((l, j) =>
      `j=${j}  lambda=${l.toFixed(8)}  predicted=${r.predicted[j].toFixed(8)}`);
    out.textContent = rows.join("\n");
  });
}

let snapshots = [];

function draw(i) {
  const c = $("fl-canvas");
  const g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const snap = snapshots[i];
  if (!snap) return;
  const ymax = Math.max(...snap.p, 1e-12) * 1.1;
  const xs = snap.s;
  const sx = (x) => ((x - xs[0]) / (xs[xs.length - 1] - xs[0])) * c.width;
  const sy = (y) => c.height - (y / ymax) * c.height;
  g.strokeStyle = "#999";
  g.beginPath();
  g.moveTo(sx(0), 0);
  g.lineTo(sx(0), c.height);
  g.stroke();
  g.strokeStyle = "#14c";
  g.lineWidth = 2;
  g.beginPath();
  snap.p.forEach((y, k) => (k ? g.lineTo(sx(xs[k]), sy(y)) : g.moveTo(sx(xs[k]), sy(y))));
  g.stroke();
  $("fl-info").textContent = `m=${snap.m}  variance=${snap.variance.toPrecision(6)}`;
}

function runFlow() {
  const info = $("fl-info");
  guarded(info, () => {
    const r = JSON.parse(flow(num("fl-a"), num("fl-t"), num("fl-steps"), GRID_N));
    snapshots = r.snapshots;
    const slider = $("fl-slider");
    slider.max = String(snapshots.length - 1);
    slider.value = slider.max;
    draw(snapshots.length - 1);
    info.textContent += `  classification: ${r.classification}`;
  });
}

function runCritical() {
  const out = $("cr-out");
  guarded(out, () => {
    const r = JSON.parse(critical(num("cr-a"), num("cr-tol"), GRID_N));
    const lines = [
      `t_c = ${r.t_c}`,
      `bracket = [${r.bracket[0]}, ${r.bracket[1]}]`,
      `high temperature lies ${r.high_t_above ? "above" : "below"} t_c`,
      "probes:",
      ...r.probes.map(([t, cls]) => `  t=${t.toFixed(10)}  ${cls}`),
    ];
    out.textContent = lines.join("\n");
  });
}

await init();
$("sp-run").onclick = runSpectrum;
$("fl-run").onclick = runFlow;
$("fl-slider").oninput = (e) => draw(Number(e.target.value));
$("cr-run").onclick = runCritical;
