import init, { simulate, gainMap, powerRegion } from "./pkg/pinchsim_web.js";

const COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];
const $ = (id) => document.getElementById(id);

function config() {
  return JSON.stringify({
    K: +$("K").value,
    M: +$("M").value,
    N: +$("N").value,
    D_y: +$("Dy").value,
    P_t_dBm: +$("Pt").value,
    R_min: +$("Rmin").value,
  });
}

function showError(e) {
  $("error").textContent = e ? String(e.message ?? e) : "";
}

// Maps area coordinates onto a canvas with a margin.
function frame(canvas, xr, yr, pad = 30) {
  const w = canvas.width - 2 * pad, h = canvas.height - 2 * pad;
  return {
    x: (x) => pad + ((x - xr[0]) / (xr[1] - xr[0])) * w,
    y: (y) => pad + h - ((y - yr[0]) / (yr[1] - yr[0])) * h,
  };
}

function drawLayout(r) {
  const c = $("layout"), g = c.getContext("2d");
  g.clearRect(0, 0, c.width, c.height);
  const hx = r.length_x / 2, hy = r.width_y / 2;
  const f = frame(c, [Math.min(-hx, r.feed_x) - 0.3, hx + 0.3], [-hy - 0.3, hy + 0.3]);
  g.strokeStyle = "#999";
  g.strokeRect(f.x(-hx), f.y(hy), f.x(hx) - f.x(-hx), f.y(-hy) - f.y(hy));
  r.waveguide_y.forEach((y, k) => {
    const col = COLORS[k % COLORS.length];
    g.strokeStyle = col;
    g.lineWidth = 3;
    g.beginPath();
    g.moveTo(f.x(r.feed_x), f.y(y));
    g.lineTo(f.x(hx), f.y(y));
    g.stroke();
    g.lineWidth = 1;
    const active = new Set(r.active[k]);
    r.antenna_x.forEach((x, m) => {
      g.beginPath();
      g.arc(f.x(x), f.y(y), 4, 0, 2 * Math.PI);
      if (active.has(m)) {
        g.fillStyle = col;
        g.fill();
      } else {
        g.strokeStyle = "#aaa";
        g.stroke();
      }
    });
  });
  r.users.forEach(([x, y], n) => {
    const col = COLORS[r.assignment[n] % COLORS.length];
    const px = f.x(x), py = f.y(y);
    g.fillStyle = col;
    g.beginPath();
    g.moveTo(px, py - 7);
    g.lineTo(px - 6, py + 5);
    g.lineTo(px + 6, py + 5);
    g.closePath();
    g.fill();
    const rate = r.user_rates[n];
    g.fillStyle = rate + 1e-9 < r.min_rate ? "#b00" : "#333";
    g.font = "11px system-ui";
    g.fillText(`${n}: ${rate.toFixed(2)}`, px + 8, py + 4);
  });
}

function drawSchemes(r) {
  $("summary").textContent = `${r.cycles} cycles, ${r.moves.length} accepted moves`;
  const rows = r.schemes
    .map((s) => `<tr><td style="text-align:left">${s.scheme}</td><td>${s.sum_rate.toFixed(3)}</td>` +
      `<td>${s.outage_users}</td><td>${s.active_antennas}</td></tr>`)
    .join("");
  $("schemes").innerHTML =
    "<tr><th>scheme</th><th>sum rate</th><th>outage</th><th>antennas</th></tr>" + rows;
}

function run() {
  try {
    const r = JSON.parse(simulate(config(), +$("seed").value));
    drawLayout(r);
    drawSchemes(r);
    showError(null);
  } catch (e) {
    showError(e);
  }
}

function heatColor(t) {
  // Dark blue through yellow.
  const r = Math.round(255 * Math.min(1, Math.max(0, 1.6 * t - 0.4)));
  const gr = Math.round(255 * Math.min(1, Math.max(0, 1.4 * t - 0.1)));
  const b = Math.round(255 * Math.max(0, 0.6 - t));
  return [r, gr, b];
}

function drawHeat() {
  try {
    const m = JSON.parse(gainMap(config(), +$("seed").value, +$("res").value));
    const c = $("heat"), g = c.getContext("2d");
    const n = m.resolution;
    const lo = Math.min(...m.snr_db), hi = Math.max(...m.snr_db);
    const img = g.createImageData(n, n);
    for (let j = 0; j < n; j++) {
      for (let i = 0; i < n; i++) {
        const v = m.snr_db[j * n + i];
        const [r, gr, b] = heatColor((v - lo) / Math.max(hi - lo, 1e-9));
        const o = ((n - 1 - j) * n + i) * 4;
        img.data.set([r, gr, b, 255], o);
      }
    }
    const tmp = document.createElement("canvas");
    tmp.width = tmp.height = n;
    tmp.getContext("2d").putImageData(img, 0, 0);
    g.imageSmoothingEnabled = false;
    g.clearRect(0, 0, c.width, c.height);
    g.drawImage(tmp, 0, 0, c.width, c.height);
    $("heatRange").textContent = `SNR from ${lo.toFixed(1)} dB to ${hi.toFixed(1)} dB`;
    showError(null);
  } catch (e) {
    showError(e);
  }
}

function drawRegion() {
  try {
    const c1 = 10 ** +$("c1").value, c2 = 10 ** +$("c2").value;
    const rmin = +$("rr").value;
    const r = JSON.parse(powerRegion(c1, c2, rmin, 400));
    const c = $("region"), g = c.getContext("2d");
    g.clearRect(0, 0, c.width, c.height);
    const pts = r.boundary.map((b) => b.rates);
    const xmax = Math.max(...pts.map((p) => p[0])) * 1.05 || 1;
    const ymax = Math.max(...pts.map((p) => p[1])) * 1.05 || 1;
    const f = frame(c, [0, xmax], [0, ymax], 40);
    g.strokeStyle = "#888";
    g.strokeRect(f.x(0), f.y(ymax), f.x(xmax) - f.x(0), f.y(0) - f.y(ymax));
    g.fillStyle = "#444";
    g.fillText("rate of first-decoded user", f.x(xmax / 2) - 60, c.height - 10);
    g.save();
    g.translate(12, f.y(ymax / 2) + 60);
    g.rotate(-Math.PI / 2);
    g.fillText("rate of last-decoded user", 0, 0);
    g.restore();
    r.boundary.forEach((b, i) => {
      if (i === 0) return;
      const a = r.boundary[i - 1];
      g.strokeStyle = b.feasible && a.feasible ? "#2ca02c" : "#ccc";
      g.lineWidth = b.feasible && a.feasible ? 3 : 1.5;
      g.beginPath();
      g.moveTo(f.x(a.rates[0]), f.y(a.rates[1]));
      g.lineTo(f.x(b.rates[0]), f.y(b.rates[1]));
      g.stroke();
    });
    g.lineWidth = 1;
    g.setLineDash([4, 4]);
    g.strokeStyle = "#b00";
    g.beginPath();
    g.moveTo(f.x(rmin), f.y(0));
    g.lineTo(f.x(rmin), f.y(ymax));
    g.moveTo(f.x(0), f.y(rmin));
    g.lineTo(f.x(xmax), f.y(rmin));
    g.stroke();
    g.setLineDash([]);
    const mark = (sol, color, size) => {
      if (!sol.rates) return;
      g.fillStyle = color;
      g.beginPath();
      g.arc(f.x(sol.rates[0]), f.y(sol.rates[1]), size, 0, 2 * Math.PI);
      g.fill();
    };
    mark(r.polyblock, "#1f77b4", 7);
    mark(r.sca, "#ff7f0e", 4);
    const line = (name, s) =>
      s.error
        ? `<p><b>${name}</b>: ${s.error}</p>`
        : `<p><b>${name}</b>: sum rate ${s.value.toFixed(4)}, p = (${s.p.map((x) => x.toFixed(3)).join(", ")}), ` +
          `${s.trace.length} trace steps</p>`;
    $("regionInfo").innerHTML =
      `<p>c = (${r.constants.map((x) => x.toExponential(2)).join(", ")})</p>` +
      line("polyblock (blue)", r.polyblock) + line("SCA (orange)", r.sca) +
      `<p class="note">Green: splits meeting the target on both users. Dashed: target rate.</p>`;
    showError(null);
  } catch (e) {
    showError(e);
  }
}

await init();
$("run").onclick = () => { run(); drawHeat(); };
$("reseed").onclick = () => { $("seed").value = +$("seed").value + 1; run(); drawHeat(); };
$("heatBtn").onclick = drawHeat;
for (const id of ["c1", "c2", "rr"]) $(id).oninput = drawRegion;
run();
drawHeat();
drawRegion();
