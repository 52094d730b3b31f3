import init, { Simulation, Localization, FourierOptimizer } from "./pkg/magnon_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function report(el, text, isError = false) {
  el.textContent = text;
  el.className = isError ? "out err" : "out";
}

// Polyline of ys against xs inside the rectangle (x0, y0, w, h).
function line(ctx, xs, ys, rect, color, range) {
  const [lo, hi] = range ?? [Math.min(...ys), Math.max(...ys)];
  const [xlo, xhi] = [xs[0], xs[xs.length - 1]];
  ctx.strokeStyle = color;
  ctx.lineWidth = 1.5;
  ctx.beginPath();
  ys.forEach((y, i) => {
    const px = rect.x + ((xs[i] - xlo) / (xhi - xlo || 1)) * rect.w;
    const py = rect.y + rect.h - ((y - lo) / (hi - lo || 1)) * rect.h;
    i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.stroke();
}

function frame(ctx, rect, title) {
  ctx.strokeStyle = "#999";
  ctx.strokeRect(rect.x, rect.y, rect.w, rect.h);
  ctx.fillStyle = "#333";
  ctx.fillText(title, rect.x + 4, rect.y - 4);
}

function drawMovie(sim) {
  const canvas = $("sim-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const n = sim.n_sites;
  const times = sim.times();
  const rho = sim.density();
  const trap = sim.trap();
  const rect = { x: 40, y: 20, w: canvas.width - 60, h: canvas.height - 50 };
  const peak = Math.max(...rho);
  const cw = rect.w / n;
  const ch = rect.h / times.length;
  // Time runs downwards; darker cells carry more probability.
  for (let f = 0; f < times.length; f++) {
    for (let s = 0; s < n; s++) {
      const v = Math.sqrt(rho[f * n + s] / peak);
      ctx.fillStyle = `rgba(31, 90, 180, ${v})`;
      ctx.fillRect(rect.x + s * cw, rect.y + f * ch, cw + 0.5, ch + 0.5);
    }
  }
  ctx.strokeStyle = "#d62728";
  ctx.beginPath();
  trap.forEach((x, f) => {
    const px = rect.x + (x - 1 + 0.5) * cw;
    const py = rect.y + (f + 0.5) * ch;
    f === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.stroke();
  frame(ctx, rect, "|ψ_n(t)|² (time downwards), trap centre in red");
}

function runSimulation() {
  try {
    const sim = new Simulation(num("sim-n"), num("sim-w"), num("sim-d"), num("sim-tau"), $("sim-kind").value, 120);
    drawMovie(sim);
    report($("sim-out"), `infidelity = ${sim.infidelity.toExponential(3)}`);
    sim.free();
  } catch (e) {
    report($("sim-out"), String(e), true);
  }
}

function runLocalization() {
  try {
    const loc = new Localization(251, num("loc-delta"), num("loc-n"), BigInt(num("loc-seed")));
    const profile = Array.from(loc.profile());
    const canvas = $("loc-canvas");
    const ctx = canvas.getContext("2d");
    ctx.clearRect(0, 0, canvas.width, canvas.height);
    const rect = { x: 40, y: 20, w: canvas.width - 60, h: canvas.height - 40 };
    const center = Math.floor(profile.length / 2);
    const xs = profile.map((_, i) => i - center);
    const logs = profile.map((p) => Math.log10(Math.max(p, 1e-12)));
    line(ctx, xs, logs, rect, "#1f77b4", [Math.max(Math.min(...logs), -6), Math.max(...logs)]);
    frame(ctx, rect, "log₁₀ ⟨|ψ|⟩ against distance from the peak");
    report($("loc-out"), `ξ = ${loc.xi.toFixed(2)} sites`);
    loc.free();
  } catch (e) {
    report($("loc-out"), String(e), true);
  }
}

let optimizer = null;
let running = false;

function drawOptimizer() {
  const canvas = $("opt-canvas");
  const ctx = canvas.getContext("2d");
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  const half = (canvas.width - 60) / 2;
  const left = { x: 40, y: 20, w: half - 20, h: canvas.height - 40 };
  const right = { x: 60 + half, y: 20, w: half - 20, h: canvas.height - 40 };
  const hist = Array.from(optimizer.history()).map((v) => Math.log10(Math.max(v, 1e-12)));
  if (hist.length > 1) line(ctx, hist.map((_, i) => i), hist, left, "#2ca02c");
  frame(ctx, left, "log₁₀ infidelity per ADAM step");
  const v = Array.from(optimizer.velocity());
  const dt = optimizer.bin_width();
  line(ctx, v.map((_, i) => (i + 1) * dt), v, right, "#ff7f0e");
  frame(ctx, right, "trap velocity dX₀/dt");
}

function tick() {
  if (!running) return;
  try {
    const value = optimizer.step(5);
    drawOptimizer();
    report($("opt-out"), `step ${optimizer.history().length}: infidelity = ${value.toExponential(3)}`);
    if (value < 1e-5 || optimizer.history().length >= 500) running = false;
  } catch (e) {
    running = false;
    report($("opt-out"), String(e), true);
  }
  if (running) requestAnimationFrame(tick);
}

function startOptimizer() {
  try {
    optimizer?.free();
    optimizer = new FourierOptimizer(251, 0.5, 50, num("opt-tau"), num("opt-nc"), num("opt-lr"));
    running = true;
    requestAnimationFrame(tick);
  } catch (e) {
    report($("opt-out"), String(e), true);
  }
}

await init();
$("sim-run").addEventListener("click", runSimulation);
$("loc-run").addEventListener("click", runLocalization);
$("opt-start").addEventListener("click", startOptimizer);
$("opt-stop").addEventListener("click", () => { running = false; });
runSimulation();
