// Expects the wasm-bindgen output (`--target web`) in ./pkg.
import init, { free_evolution, noise_sample, stochastic_solution } from "./pkg/schrocurve_web.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

function draw(profile, label) {
  const canvas = $("plot");
  const ctx = canvas.getContext("2d");
  const x = profile.x;
  const y = profile.values;
  const lo = Math.min(0, ...y);
  const hi = Math.max(...y, lo + 1e-12);
  const px = (v) => ((v - x[0]) / (x[x.length - 1] - x[0])) * (canvas.width - 40) + 20;
  const py = (v) => canvas.height - 20 - ((v - lo) / (hi - lo)) * (canvas.height - 40);
  ctx.clearRect(0, 0, canvas.width, canvas.height);
  ctx.strokeStyle = "#bbb";
  ctx.beginPath();
  ctx.moveTo(px(x[0]), py(0));
  ctx.lineTo(px(x[x.length - 1]), py(0));
  ctx.stroke();
  ctx.strokeStyle = "#1f5fa8";
  ctx.lineWidth = 2;
  ctx.beginPath();
  y.forEach((v, i) => (i ? ctx.lineTo(px(x[i]), py(v)) : ctx.moveTo(px(x[i]), py(v))));
  ctx.stroke();
  $("status").textContent = `${label}  (max ${hi.toExponential(3)})`;
}

function guarded(f) {
  return () => {
    try {
      f();
    } catch (err) {
      $("status").textContent = `error: ${err}`;
    }
  };
}

await init();

$("run-free").onclick = guarded(() => {
  const p = free_evolution($("metric").value, num("width"), num("momentum"), num("time"));
  draw(p, `|S(t) u0| at t = ${p.time} on ${$("metric").value}`);
});

$("run-noise").onclick = guarded(() => {
  const p = noise_sample(num("mass"), 1.0, num("seed"));
  draw(p, `Re of one increment, mass ${num("mass")}, seed ${num("seed")}`);
});

$("run-sde").onclick = guarded(() => {
  $("status").textContent = "solving...";
  const p = stochastic_solution($("metric").value, num("drift"), num("sigma"), num("mass"), num("seed"));
  draw(p, `|u(T0)| with T0 = ${p.time.toFixed(3)}`);
});

$("run-free").click();
