import init, { CurvatureDemo, warmup_scales, split_offsets } from "./pkg/curvsplat_web.js";

const $ = (id) => document.getElementById(id);
let demo = null;
let yaw = 0.6, pitch = 0.4;

function colorRamp(v) {
  const t = Math.max(0, Math.min(1, v));
  const r = Math.round(255 * Math.min(1, 2 * t));
  const b = Math.round(255 * Math.min(1, 2 * (1 - t)));
  return `rgb(${r},${Math.round(80 + 80 * (1 - Math.abs(2 * t - 1)))},${b})`;
}

function drawCloud() {
  const c = $("cloud"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  if (!demo) return;
  const p = demo.positions();
  const mode = $("color").value;
  let values = mode === "truth" ? demo.truth_mac() : mode === "error" ? demo.normal_errors() : demo.mac();
  if (values.length === 0) values = demo.normal_errors();
  const sorted = Float64Array.from(values).sort();
  const hi = sorted[Math.floor(0.95 * (sorted.length - 1))] || 1;

  let extent = 0;
  for (let i = 0; i < p.length; i++) extent = Math.max(extent, Math.abs(p[i]));
  const scale = 0.45 * Math.min(c.width, c.height) / (extent || 1);
  const cy = Math.cos(yaw), sy = Math.sin(yaw), cp = Math.cos(pitch), sp = Math.sin(pitch);
  const n = p.length / 3;
  const order = new Array(n);
  const screen = new Float64Array(3 * n);
  for (let i = 0; i < n; i++) {
    const x = p[3 * i], y = p[3 * i + 1], z = p[3 * i + 2];
    const x1 = cy * x + sy * y, y1 = -sy * x + cy * y;
    const y2 = cp * y1 - sp * z, z2 = sp * y1 + cp * z;
    screen[3 * i] = c.width / 2 + scale * x1;
    screen[3 * i + 1] = c.height / 2 - scale * z2;
    screen[3 * i + 2] = y2;
    order[i] = i;
  }
  order.sort((a, b) => screen[3 * b + 2] - screen[3 * a + 2]);
  for (const i of order) {
    g.fillStyle = colorRamp(values[i] / hi);
    g.fillRect(screen[3 * i] - 1.5, screen[3 * i + 1] - 1.5, 3, 3);
  }
}

function run() {
  const out = $("summary");
  try {
    if (demo) demo.free();
    const t0 = performance.now();
    demo = new CurvatureDemo($("surface").value, Number($("n").value), Number($("sigma").value),
      $("method").value, 7n);
    const ms = performance.now() - t0;
    const [err, mac, flagged] = demo.summary();
    out.className = "out";
    out.textContent =
      `points ${demo.len()}   time ${ms.toFixed(0)} ms\n` +
      `median normal error ${err.toFixed(3)} deg\n` +
      `median |H| ${Number.isNaN(mac) ? "n/a" : mac.toFixed(4)}   flagged ${flagged}`;
  } catch (e) {
    demo = null;
    out.className = "out err";
    out.textContent = String(e.message || e);
  }
  drawCloud();
}

function drawSplit() {
  const c = $("split"), g = c.getContext("2d");
  const t1 = Number($("tau1").value), t2 = Number($("tau2").value);
  const xi = Math.max(0.001, Number($("ximin").value));
  g.clearRect(0, 0, c.width, c.height);
  const half = 2.5, px = c.width / (2 * half);
  const toX = (u) => c.width / 2 + u * px, toY = (v) => c.height / 2 - v * px;

  g.strokeStyle = "#ddd";
  g.beginPath();
  g.moveTo(0, c.height / 2); g.lineTo(c.width, c.height / 2);
  g.moveTo(c.width / 2, 0); g.lineTo(c.width / 2, c.height);
  g.stroke();

  const d = split_offsets(t1, t2, xi, 1500, 11n);
  g.fillStyle = "rgba(30,90,200,0.35)";
  for (let i = 0; i < d.length; i += 3) g.fillRect(toX(d[i]) - 1, toY(d[i + 1]) - 1, 2, 2);

  const s = warmup_scales(1, t1, t2, xi, 1e6);
  const a = Math.max(Math.abs(t1), xi), b = Math.max(Math.abs(t2), xi);
  g.strokeStyle = "#c33";
  g.lineWidth = 2;
  g.beginPath();
  g.ellipse(c.width / 2, c.height / 2, s[1] * px, s[0] * px, 0, 0, 2 * Math.PI);
  g.stroke();
  g.lineWidth = 1;

  $("scales").textContent =
    `tau1 ${t1.toFixed(1)}  tau2 ${t2.toFixed(1)}\n` +
    `warm-up scales ${Array.from(s, (v) => v.toPrecision(3)).join("  ")}\n` +
    `split spread along w1 ${(1 / a).toPrecision(3)}, along w2 ${(1 / b).toPrecision(3)}`;
}

let drag = null;
$("cloud").addEventListener("pointerdown", (e) => { drag = [e.clientX, e.clientY]; });
window.addEventListener("pointerup", () => { drag = null; });
window.addEventListener("pointermove", (e) => {
  if (!drag) return;
  yaw += (e.clientX - drag[0]) * 0.01;
  pitch = Math.max(-1.5, Math.min(1.5, pitch + (e.clientY - drag[1]) * 0.01));
  drag = [e.clientX, e.clientY];
  drawCloud();
});

await init();
$("run").addEventListener("click", run);
$("color").addEventListener("change", drawCloud);
for (const id of ["tau1", "tau2", "ximin"]) $(id).addEventListener("input", drawSplit);
run();
drawSplit();
