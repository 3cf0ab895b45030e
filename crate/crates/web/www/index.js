// Built with: wasm-pack build crates/web --target web --out-dir www/pkg
import init, { sampleDirections, comparePaths, planGfmPlus } from "./pkg/gzoo_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);
const COLORS = { gfm: "#c0392b", gfm_plus: "#2471a3" };

function showError(target, err) {
  target.textContent = String(err);
  target.className = "error";
}

function drawDirections() {
  const canvas = $("dir-canvas");
  const ctx = canvas.getContext("2d");
  const stats = $("dir-stats");
  stats.className = "";
  let pts;
  try {
    pts = sampleDirections(2, num("dir-count"), num("dir-seed"), $("dir-ball").checked);
  } catch (e) {
    return showError(stats, e);
  }
  const c = canvas.width / 2;
  const r = c - 10;
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.arc(c, c, r, 0, 2 * Math.PI);
  ctx.stroke();
  ctx.fillStyle = "#333";
  let sx = 0;
  let sy = 0;
  let sr = 0;
  for (let i = 0; i < pts.length; i += 2) {
    const [x, y] = [pts[i], pts[i + 1]];
    sx += x;
    sy += y;
    sr += Math.hypot(x, y);
    ctx.fillRect(c + x * r - 1, c - y * r - 1, 2, 2);
  }
  const n = pts.length / 2;
  stats.textContent = `mean = (${(sx / n).toFixed(3)}, ${(sy / n).toFixed(3)}), mean radius = ${(sr / n).toFixed(3)}`;
}

function bounds(paths) {
  let lo = Infinity;
  let hi = -Infinity;
  for (const p of paths) {
    for (const [x, y] of p.points) {
      lo = Math.min(lo, x, y);
      hi = Math.max(hi, x, y);
    }
  }
  const pad = 0.1 * (hi - lo || 1);
  return [lo - pad, hi + pad];
}

function drawPaths(result) {
  const canvas = $("path-canvas");
  const ctx = canvas.getContext("2d");
  const w = canvas.width;
  const [lo, hi] = bounds([result.gfm, result.gfm_plus]);
  const px = (v) => ((v - lo) / (hi - lo)) * w;
  const py = (v) => w - ((v - lo) / (hi - lo)) * w;
  ctx.clearRect(0, 0, w, w);
  ctx.strokeStyle = "#ddd";
  ctx.beginPath();
  ctx.moveTo(px(0), 0);
  ctx.lineTo(px(0), w);
  ctx.moveTo(0, py(0));
  ctx.lineTo(w, py(0));
  ctx.stroke();
  for (const key of ["gfm", "gfm_plus"]) {
    ctx.strokeStyle = COLORS[key];
    ctx.beginPath();
    result[key].points.forEach(([x, y], i) => (i ? ctx.lineTo(px(x), py(y)) : ctx.moveTo(px(x), py(y))));
    ctx.stroke();
  }
}

function drawValues(result) {
  const canvas = $("value-canvas");
  const ctx = canvas.getContext("2d");
  const [w, h] = [canvas.width, canvas.height];
  const maxCalls = Math.max(...result.gfm.calls, ...result.gfm_plus.calls, 1);
  const all = [...result.gfm.values, ...result.gfm_plus.values];
  const [lo, hi] = [Math.min(...all), Math.max(...all)];
  const px = (c) => 30 + (c / maxCalls) * (w - 40);
  const py = (v) => h - 20 - ((v - lo) / (hi - lo || 1)) * (h - 40);
  ctx.clearRect(0, 0, w, h);
  ctx.fillStyle = "#555";
  ctx.fillText(hi.toPrecision(3), 2, 14);
  ctx.fillText(lo.toPrecision(3), 2, h - 22);
  ctx.fillText(`${maxCalls} calls`, w - 80, h - 4);
  for (const key of ["gfm", "gfm_plus"]) {
    const p = result[key];
    ctx.strokeStyle = COLORS[key];
    ctx.beginPath();
    p.values.forEach((v, i) => (i ? ctx.lineTo(px(p.calls[i]), py(v)) : ctx.moveTo(px(p.calls[i]), py(v))));
    ctx.stroke();
  }
}

function runPaths() {
  const stats = $("path-stats");
  stats.className = "";
  let result;
  try {
    const json = comparePaths(
      $("path-problem").value,
      num("path-x"),
      num("path-y"),
      num("path-delta"),
      num("path-eta"),
      num("path-steps"),
      num("path-m"),
      num("path-b"),
      num("path-bp"),
      num("path-seed"),
    );
    result = JSON.parse(json);
  } catch (e) {
    return showError(stats, e);
  }
  drawPaths(result);
  drawValues(result);
  const last = (p) => p.values[p.values.length - 1].toPrecision(4);
  const calls = (p) => p.calls[p.calls.length - 1];
  stats.textContent =
    `final f: GFM ${last(result.gfm)} after ${calls(result.gfm)} calls, ` +
    `GFM+ ${last(result.gfm_plus)} after ${calls(result.gfm_plus)} calls`;
}

function runPlan() {
  const out = $("plan-out");
  out.className = "";
  try {
    const r = JSON.parse(planGfmPlus(num("plan-d"), num("plan-l"), num("plan-gap"), num("plan-delta"), num("plan-eps")));
    const c = r.config;
    out.textContent = [
      `eta = ${c.eta.toPrecision(6)}`,
      `T = ${c.iterations}`,
      `m = ${c.epoch_length}`,
      `b = ${c.batch}`,
      `b' = ${c.epoch_batch}`,
      `oracle calls = ${r.oracle_calls}`,
      `order-level calls = ${r.order_level_calls}`,
      `sigma^2 = ${r.sigma_squared.toPrecision(7)}`,
      `smoothed gradient Lipschitz = ${r.smooth_lipschitz.toPrecision(6)}`,
      `mean-squared Lipschitz = ${r.ms_lipschitz.toPrecision(6)}`,
    ].join("\n");
  } catch (e) {
    showError(out, e);
  }
}

await init();
$("dir-go").addEventListener("click", drawDirections);
$("path-go").addEventListener("click", runPaths);
$("plan-go").addEventListener("click", runPlan);
drawDirections();
runPaths();
runPlan();
