import init, { DarcyBlob, ballEigenvalue, rateFit } from "./pkg/homog_demo.js";

const $ = (id) => document.getElementById(id);
const num = (id) => Number($(id).value);

let blob = null;
let timer = null;

function show(id, text) {
  $(id).textContent = text;
}

function draw() {
  const n = blob.size();
  const canvas = $("view");
  canvas.width = n;
  canvas.height = n;
  const ctx = canvas.getContext("2d");
  const img = ctx.createImageData(n, n);
  const data = blob.slice();
  const lo = blob.min();
  const span = Math.max(blob.max() - lo, 1e-12);
  for (let j = 0; j < n; j++) {
    for (let i = 0; i < n; i++) {
      const s = (data[j * n + i] - lo) / span;
      // flip so y points up
      const o = 4 * ((n - 1 - j) * n + i);
      img.data[o] = 255 * s;
      img.data[o + 1] = 80 + 120 * s;
      img.data[o + 2] = 255 * (1 - s);
      img.data[o + 3] = 255;
    }
  }
  ctx.putImageData(img, 0, 0);
  show(
    "blobStats",
    `t = ${blob.time().toFixed(3)}   min ${blob.min().toFixed(5)}   max ${blob.max().toFixed(5)}   ` +
      `mass drift ${blob.mass_drift().toExponential(2)}   CFL ${blob.cfl().toFixed(2)}`
  );
}

function reset() {
  stop();
  try {
    if (blob) blob.free();
    blob = new DarcyBlob(num("n"), num("amp"), num("width"), num("fx"), num("fy"), num("k"));
    draw();
  } catch (e) {
    blob = null;
    show("blobStats", String(e));
  }
}

function advance() {
  if (!blob) return;
  try {
    blob.step(1, num("dt"));
    draw();
  } catch (e) {
    stop();
    show("blobStats", String(e));
  }
}

function stop() {
  if (timer !== null) clearInterval(timer);
  timer = null;
  $("run").textContent = "Run";
}

function toggle() {
  if (timer !== null) return stop();
  if (!blob) reset();
  timer = setInterval(advance, 30);
  $("run").textContent = "Pause";
}

function eigenvalue() {
  show("eigOut", "computing...");
  // let the message paint before the solve blocks the tab
  setTimeout(() => {
    try {
      const r = num("radius");
      const [lambda, cap] = ballEigenvalue(r, num("half"));
      show(
        "eigOut",
        `λ_min = ${lambda.toFixed(5)}   capacity 4πr = ${cap.toFixed(5)}   ratio ${(lambda / cap).toFixed(3)}`
      );
    } catch (e) {
      show("eigOut", String(e));
    }
  }, 10);
}

function fit() {
  const eps = [];
  const vals = [];
  for (const line of $("rows").value.split("\n")) {
    const parts = line.trim().split(/[\s,]+/).filter(Boolean);
    if (parts.length === 0) continue;
    eps.push(Number(parts[0]));
    vals.push(Number(parts[1]));
  }
  try {
    const [slope, intercept, r2] = rateFit(new Float64Array(eps), new Float64Array(vals));
    show("fitOut", `slope ${slope.toFixed(4)}   intercept ${intercept.toFixed(4)}   R² ${r2.toFixed(5)}`);
  } catch (e) {
    show("fitOut", String(e));
  }
}

await init();
$("reset").onclick = reset;
$("run").onclick = toggle;
$("stepOnce").onclick = advance;
$("eig").onclick = eigenvalue;
$("fit").onclick = fit;
reset();
