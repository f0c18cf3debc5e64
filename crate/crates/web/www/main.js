import init, { profile, evolution, spectrum } from "./pkg/lifting_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => parseFloat($(id).value);

// Draws polylines [{x: [], y: [], color}] with linear axes and tick labels.
function plot(canvas, lines, points = []) {
  const ctx = canvas.getContext("2d");
  const { width: w, height: h } = canvas;
  const pad = 40;
  ctx.clearRect(0, 0, w, h);
  const xs = lines.flatMap((l) => l.x).concat(points.map((p) => p.x));
  const ys = lines.flatMap((l) => l.y).concat(points.map((p) => p.y));
  let [x0, x1] = [Math.min(...xs), Math.max(...xs)];
  let [y0, y1] = [Math.min(...ys), Math.max(...ys)];
  if (x1 === x0) { x0 -= 1; x1 += 1; }
  if (y1 === y0) { y0 -= 1; y1 += 1; }
  const sx = (x) => pad + ((x - x0) / (x1 - x0)) * (w - 2 * pad);
  const sy = (y) => h - pad - ((y - y0) / (y1 - y0)) * (h - 2 * pad);

  ctx.strokeStyle = "#999";
  ctx.fillStyle = "#444";
  ctx.font = "11px sans-serif";
  ctx.strokeRect(pad, pad, w - 2 * pad, h - 2 * pad);
  for (let i = 0; i <= 4; i++) {
    const xv = x0 + ((x1 - x0) * i) / 4;
    const yv = y0 + ((y1 - y0) * i) / 4;
    ctx.fillText(xv.toPrecision(3), sx(xv) - 12, h - pad + 14);
    ctx.fillText(yv.toPrecision(3), 2, sy(yv) + 4);
  }
  if (y0 < 0 && y1 > 0) {
    ctx.beginPath();
    ctx.moveTo(pad, sy(0));
    ctx.lineTo(w - pad, sy(0));
    ctx.stroke();
  }
  for (const l of lines) {
    ctx.strokeStyle = l.color;
    ctx.beginPath();
    l.x.forEach((x, i) => (i ? ctx.lineTo(sx(x), sy(l.y[i])) : ctx.moveTo(sx(x), sy(l.y[i]))));
    ctx.stroke();
  }
  for (const p of points) {
    ctx.fillStyle = p.color;
    ctx.beginPath();
    ctx.arc(sx(p.x), sy(p.y), p.r ?? 4, 0, 2 * Math.PI);
    ctx.fill();
  }
}

function report(id, fn) {
  const out = $(id);
  out.classList.remove("err");
  try {
    out.textContent = fn();
  } catch (e) {
    out.classList.add("err");
    out.textContent = String(e.message ?? e);
  }
}

function runProfile() {
  report("p-out", () => {
    const r = JSON.parse(profile(num("p-m"), 1, num("p-kappa"), num("p-ymax")));
    const x = r.curve.y.map(Math.log);
    plot($("p-plot"), [
      { x, y: r.curve.w, color: "#1f5fa8" },
      { x: [x[0], x[x.length - 1]], y: [2, 2], color: "#ccc" },
    ]);
    return `event ${r.event} at y = ${r.y_end.toPrecision(6)}`;
  });
}

function runEvolution() {
  const n = Math.max(2, Math.round(num("e-n")));
  report("e-out", () => {
    const r = JSON.parse(evolution(num("e-m"), num("e-b"), num("e-t0"), num("e-t1"), n, 5));
    const lines = r.h.map((row, i) => ({
      x: r.x,
      y: row,
      color: `hsl(${210 - (150 * i) / Math.max(1, r.h.length - 1)}, 70%, 40%)`,
    }));
    plot($("e-plot"), lines);
    return `kappa* = ${r.kappa_star.toPrecision(10)}   a = ${r.a.toPrecision(8)}   D = ${r.dissipation.toPrecision(6)}`;
  });
}

function runSpectrum() {
  report("s-out", () => {
    const r = JSON.parse(spectrum(num("s-a"), num("s-b")));
    const pts = r.roots.map((z) => ({ x: z.re, y: z.im, color: "#888" }));
    pts.push({ x: r.z0.re, y: r.z0.im, color: "#c0392b", r: 6 });
    plot($("s-plot"), [], pts);
    const fmt = (z) => `${z.re.toFixed(6)} ${z.im < 0 ? "-" : "+"} ${Math.abs(z.im).toFixed(6)}i`;
    return r.roots.map(fmt).join("\n") + `\nlambda0 = ${r.lambda0.toFixed(6)}   omega0 = ${r.omega0.toFixed(6)}`;
  });
}

await init();
$("p-run").onclick = runProfile;
$("e-run").onclick = runEvolution;
$("s-run").onclick = runSpectrum;
runProfile();
runSpectrum();
