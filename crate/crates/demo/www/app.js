import init, { cdf_curve, transform, simplex_race, fairness_run } from "./pkg/aaggff_demo.js";

const $ = (id) => document.getElementById(id);

function report(id, fn) {
  try {
    fn();
  } catch (e) {
    $(id).innerHTML = `<span class="err">${e}</span>`;
  }
}

function axes(ctx, w, h, pad) {
  ctx.clearRect(0, 0, w, h);
  ctx.strokeStyle = "#999";
  ctx.beginPath();
  ctx.moveTo(pad, pad);
  ctx.lineTo(pad, h - pad);
  ctx.lineTo(w - pad, h - pad);
  ctx.stroke();
}

function polyline(ctx, xs, ys, color) {
  ctx.strokeStyle = color;
  ctx.beginPath();
  xs.forEach((x, i) => (i ? ctx.lineTo(x, ys[i]) : ctx.moveTo(x, ys[i])));
  ctx.stroke();
}

function drawCdf() {
  report("cdf-out", () => {
    const fam = $("cdf-family").value;
    const scale = +$("cdf-scale").value;
    const shape = +$("cdf-shape").value;
    const losses = Float64Array.from($("cdf-losses").value.split(",").map(Number));
    const xMax = 3, n = 200;
    const curve = cdf_curve(fam, scale, shape, xMax, n);
    const cv = $("cdf-canvas"), ctx = cv.getContext("2d"), pad = 30;
    const sx = (x) => pad + (x / xMax) * (cv.width - 2 * pad);
    const sy = (y) => cv.height - pad - y * (cv.height - 2 * pad);
    axes(ctx, cv.width, cv.height, pad);
    polyline(ctx, [...curve].map((_, i) => sx((xMax * i) / (n - 1))), [...curve].map(sy), "#1f77b4");
    const r = transform(fam, scale, shape, losses);
    const mean = losses.reduce((a, b) => a + b, 0) / losses.length;
    ctx.fillStyle = "#d62728";
    losses.forEach((l, i) => {
      ctx.beginPath();
      ctx.arc(sx(l / mean), sy(r[i]), 4, 0, 2 * Math.PI);
      ctx.fill();
    });
    $("cdf-out").textContent =
      "loss / mean : " + [...losses].map((l) => (l / mean).toFixed(3)).join("  ") +
      "\nresponse    : " + [...r].map((v) => v.toFixed(3)).join("  ");
  });
}

function drawRace() {
  report("race-out", () => {
    const t = Math.max(1, Math.min(5000, +$("race-rounds").value));
    const v = simplex_race($("race-pattern").value, t, BigInt(+$("race-seed").value));
    const cv = $("race-canvas"), ctx = cv.getContext("2d");
    ctx.clearRect(0, 0, cv.width, cv.height);
    // barycentric triangle, one per rule
    const tri = (cx) => [[cx, 30], [cx - 180, 330], [cx + 180, 330]];
    const plot = (corners, offset, color, title) => {
      ctx.strokeStyle = "#999";
      ctx.beginPath();
      corners.forEach(([x, y], i) => (i ? ctx.lineTo(x, y) : ctx.moveTo(x, y)));
      ctx.closePath();
      ctx.stroke();
      ctx.fillStyle = "#333";
      ctx.fillText(title, corners[1][0], 350);
      corners.forEach(([x, y], i) => ctx.fillText(`client ${i}`, x + 6, y));
      const xs = [], ys = [];
      for (let k = 0; k < t; k++) {
        const p = v.subarray(6 * k + offset, 6 * k + offset + 3);
        xs.push(p[0] * corners[0][0] + p[1] * corners[1][0] + p[2] * corners[2][0]);
        ys.push(p[0] * corners[0][1] + p[1] * corners[1][1] + p[2] * corners[2][1]);
      }
      polyline(ctx, xs, ys, color);
    };
    plot(tri(225), 0, "#2ca02c", "AAggFF-S (online Newton step)");
    plot(tri(675), 3, "#9467bd", "AAggFF-D (entropic FTRL)");
    const [rs, bs, rd, bd] = v.subarray(6 * t);
    $("race-out").textContent =
      `AAggFF-S regret ${rs.toFixed(4)}  (bound ${bs.toFixed(4)})\n` +
      `AAggFF-D regret ${rd.toFixed(4)}  (bound ${bd.toFixed(4)})`;
  });
}

function drawFl() {
  report("fl-out", () => {
    const k = +$("fl-k").value, t = +$("fl-t").value;
    const v = fairness_run($("fl-method").value, k, t, +$("fl-c").value, +$("fl-alpha").value, 0n);
    const worst = v.subarray(0, t), acc = [...v.subarray(t)];
    const cv = $("fl-canvas"), ctx = cv.getContext("2d"), pad = 30, half = cv.width / 2;
    axes(ctx, half, cv.height, pad);
    const sx = (i) => pad + (i / Math.max(1, t - 1)) * (half - 2 * pad);
    const sy = (y) => cv.height - pad - y * (cv.height - 2 * pad);
    polyline(ctx, [...worst].map((_, i) => sx(i)), [...worst].map(sy), "#ff7f0e");
    ctx.fillStyle = "#333";
    ctx.fillText("worst-10% accuracy per round", pad + 4, pad - 8);
    const bw = (half - 2 * pad) / acc.length;
    acc.sort((a, b) => a - b).forEach((a, i) => {
      ctx.fillStyle = "#1f77b4";
      ctx.fillRect(half + pad + i * bw, sy(a), bw - 1, sy(0) - sy(a));
    });
    ctx.fillStyle = "#333";
    ctx.fillText("final client accuracies (sorted)", half + pad, pad - 8);
    const mean = acc.reduce((a, b) => a + b, 0) / acc.length;
    $("fl-out").textContent = `average ${mean.toFixed(4)}   worst-10% ${worst[t - 1].toFixed(4)}`;
  });
}

await init();
["cdf-family", "cdf-scale", "cdf-shape", "cdf-losses"].forEach((id) => $(id).addEventListener("input", drawCdf));
$("cdf-family").addEventListener("change", () => {
  $("cdf-shape").value = $("cdf-family").value === "Weibull" ? 2 : 1;
  drawCdf();
});
$("race-go").addEventListener("click", drawRace);
$("fl-go").addEventListener("click", drawFl);
drawCdf();
drawRace();
