import init, { simulate_experiment, stability, fit_static } from "./pkg/dtslpm_wasm.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
const $ = (id) => document.getElementById(id);

let lastSim = null;

// Maps model coordinates in [-span, span]^2 onto a square canvas.
function frame(canvas, span) {
  const s = canvas.width / (2 * span);
  return {
    x: (v) => canvas.width / 2 + v * s,
    y: (v) => canvas.height / 2 - v * s,
    inv: (px, py) => [(px - canvas.width / 2) / s, (canvas.height / 2 - py) / s],
  };
}

function drawPaths(sim) {
  const c = $("paths");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const all = sim.positions.flat();
  const span = 1.1 * Math.max(...all.map((p) => Math.max(Math.abs(p[0]), Math.abs(p[1]))));
  const f = frame(c, span);
  const n = sim.positions[0].length;
  for (let i = 0; i < n; i++) {
    ctx.strokeStyle = COLORS[i % COLORS.length];
    ctx.beginPath();
    sim.positions.forEach((slice, t) => {
      const [x, y] = slice[i];
      t === 0 ? ctx.moveTo(f.x(x), f.y(y)) : ctx.lineTo(f.x(x), f.y(y));
    });
    ctx.stroke();
    const [x, y] = sim.positions[sim.positions.length - 1][i];
    ctx.fillStyle = ctx.strokeStyle;
    ctx.beginPath();
    ctx.arc(f.x(x), f.y(y), 5, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText(`node ${i + 1}`, f.x(x) + 7, f.y(y) - 7);
  }
}

function drawSeries(canvas, series, extra) {
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const pad = 30;
  const len = series[0].length;
  const top = Math.max(1, ...extra);
  const x = (t) => pad + (t / (len - 1)) * (canvas.width - 2 * pad);
  const y = (v) => canvas.height - pad - (v / top) * (canvas.height - 2 * pad);
  ctx.strokeStyle = "#999";
  ctx.strokeRect(pad, pad, canvas.width - 2 * pad, canvas.height - 2 * pad);
  ctx.fillStyle = "#555";
  ctx.fillText(top.toFixed(2), 2, pad + 4);
  ctx.fillText("0", 12, canvas.height - pad);
  series.forEach((s, k) => {
    ctx.strokeStyle = COLORS[k % COLORS.length];
    ctx.beginPath();
    s.forEach((v, t) => (t === 0 ? ctx.moveTo(x(t), y(v)) : ctx.lineTo(x(t), y(v))));
    ctx.stroke();
  });
  ctx.setLineDash([5, 4]);
  ctx.strokeStyle = "#000";
  ctx.beginPath();
  extra.forEach((v, t) => (t === 0 ? ctx.moveTo(x(t), y(v)) : ctx.lineTo(x(t), y(v))));
  ctx.stroke();
  ctx.setLineDash([]);
}

function runSimulation() {
  try {
    lastSim = JSON.parse(simulate_experiment($("design").value, Number($("ntimes").value), BigInt($("seed").value)));
  } catch (e) {
    alert(e.message ?? e);
    return;
  }
  drawPaths(lastSim);
  drawSeries($("gamma"), lastSim.gamma, lastSim.radius);
  $("fit").disabled = false;
}

// --- draggable stability playground -------------------------------------

const dragNodes = [[-1.5, 0.5], [1.5, 0.5], [0, -1.5], [0.2, 0.3]];
let dragging = -1;

function drawDrag() {
  const c = $("drag");
  const ctx = c.getContext("2d");
  const f = frame(c, 4);
  const beta = Number($("beta").value);
  $("betaval").textContent = beta.toFixed(2);
  const out = JSON.parse(stability(new Float64Array(dragNodes.flat()), new Float64Array(dragNodes.map(() => beta))));
  ctx.clearRect(0, 0, c.width, c.height);
  for (let i = 0; i < dragNodes.length; i++) {
    for (let j = i + 1; j < dragNodes.length; j++) {
      ctx.strokeStyle = `rgba(0,0,0,${out.gamma[i][j]})`;
      ctx.lineWidth = 1 + 4 * out.gamma[i][j];
      ctx.beginPath();
      ctx.moveTo(f.x(dragNodes[i][0]), f.y(dragNodes[i][1]));
      ctx.lineTo(f.x(dragNodes[j][0]), f.y(dragNodes[j][1]));
      ctx.stroke();
    }
  }
  ctx.lineWidth = 1;
  dragNodes.forEach(([x, y], i) => {
    ctx.fillStyle = COLORS[i];
    ctx.beginPath();
    ctx.arc(f.x(x), f.y(y), 9, 0, 2 * Math.PI);
    ctx.fill();
  });
  const r = out.report;
  const cls = r.relaxed_satisfied ? "good" : "bad";
  $("report").innerHTML =
    `spectral radius   <span class="${cls}">${r.max_abs_eigenvalue.toFixed(4)}</span>\n` +
    `row-sum bounds    [${r.row_lower.toFixed(3)}, ${r.row_upper.toFixed(3)}]\n` +
    `row-sum condition ${r.satisfied ? "holds" : "fails"}\n` +
    `verdict           <span class="${cls}">${r.relaxed_satisfied ? "stationary" : "may explode"}</span>`;
}

function pointer(ev) {
  const c = $("drag");
  const rect = c.getBoundingClientRect();
  return frame(c, 4).inv(ev.clientX - rect.left, ev.clientY - rect.top);
}

$("drag").addEventListener("pointerdown", (ev) => {
  const [x, y] = pointer(ev);
  dragging = dragNodes.findIndex(([a, b]) => Math.hypot(a - x, b - y) < 0.3);
});
$("drag").addEventListener("pointermove", (ev) => {
  if (dragging < 0) return;
  dragNodes[dragging] = pointer(ev);
  drawDrag();
});
window.addEventListener("pointerup", () => (dragging = -1));
$("beta").addEventListener("input", drawDrag);

// --- static fit ------------------------------------------------------------

function runFit() {
  const counts = new Uint32Array(lastSim.counts.flat());
  const fit = JSON.parse(fit_static(counts, lastSim.counts.length, 0n));
  const c = $("fitted");
  const ctx = c.getContext("2d");
  ctx.clearRect(0, 0, c.width, c.height);
  const span = 1.2 * Math.max(1, ...fit.positions.flat().map(Math.abs));
  const f = frame(c, span);
  fit.positions.forEach(([x, y], i) => {
    ctx.fillStyle = COLORS[i % COLORS.length];
    ctx.beginPath();
    ctx.arc(f.x(x), f.y(y), 7, 0, 2 * Math.PI);
    ctx.fill();
    ctx.fillText(`node ${i + 1}`, f.x(x) + 9, f.y(y) - 9);
  });
  const fmt = (v) => v.toFixed(3).padStart(7);
  $("fitinfo").textContent =
    `alpha        true ${fmt(lastSim.alpha)}  fit ${fmt(fit.alpha)}\n` +
    fit.beta.map((b, i) => `beta[${i + 1}]      true ${fmt(lastSim.beta[i])}  fit ${fmt(b)}`).join("\n") +
    `\n\nconverged ${fit.converged} after ${fit.iterations} iterations` +
    `\nlog posterior ${fit.log_posterior.toFixed(2)}`;
}

await init();
$("simulate").addEventListener("click", runSimulation);
$("fit").addEventListener("click", runFit);
runSimulation();
drawDrag();
