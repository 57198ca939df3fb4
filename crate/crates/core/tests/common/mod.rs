//! Helpers shared by the integration tests and the acceptance harness.
#![allow(dead_code)]

use rand::{Rng as _, SeedableRng};
use ugac::losses::{adv_generator_loss, loss_ucyc, total_generator_loss, CycleTerms, LossWeights};
use ugac::nets::{Discriminator, Generator};
use ugac::{Graph, Rng, Tensor, Var};

pub const FD_STEP: f64 = 1e-5;
/// Step for whole-network checks. A conv weight moves every activation of
/// its channel, so at 1e-5 or 1e-6 some leaky-ReLU kinks get crossed and the
/// difference quotient picks up an O(h) bias.
pub const FD_STEP_COMPOSITE: f64 = 1e-7;
/// Gradient norm below which a parameter tensor counts as gradient-free
/// (biases feeding an instance norm, for example).
pub const GRAD_FLOOR: f64 = 1e-4;

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    let mut r = rng(seed);
    Tensor::from_fn(shape.to_vec(), |_| r.random_range(lo..hi))
}

/// `‖a − n‖ / max(‖a‖, ‖n‖, floor)` over one tensor, 0 when all vanish.
pub fn rel_err(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    let scale = norm(analytic).max(norm(numeric)).max(floor);
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Central-difference check of `build` with respect to every input. Non-scalar
/// outputs are contracted with fixed random weights first. Returns the worst
/// relative error over the inputs.
pub fn grad_check(inputs: &[Tensor], build: impl Fn(&mut Graph, &[Var]) -> ugac::Result<Var>) -> f64 {
    let eval = |ts: &[Tensor], with_grad: bool| -> (f64, Vec<Vec<f64>>) {
        let mut g = Graph::new();
        let vars: Vec<Var> = ts.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &vars).expect("forward");
        let w = g.constant(uniform(g.shape(out), -1.0, 1.0, 991));
        let prod = g.mul(out, w).expect("weights");
        let loss = g.sum(prod);
        let value = g.value(loss).item().unwrap();
        if !with_grad {
            return (value, Vec::new());
        }
        let grads = g.backward(loss).expect("backward");
        let gs = vars
            .iter()
            .map(|&v| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).numel()]))
            .collect();
        (value, gs)
    };
    let (_, analytic) = eval(inputs, true);
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let mut numeric = vec![0.0; input.numel()];
        for i in 0..input.numel() {
            let mut shifted = inputs.to_vec();
            shifted[k].data_mut()[i] += FD_STEP;
            let plus = eval(&shifted, false).0;
            shifted[k].data_mut()[i] -= 2.0 * FD_STEP;
            let minus = eval(&shifted, false).0;
            numeric[i] = (plus - minus) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic[k], &numeric, 0.0));
    }
    worst
}

/// The four networks of one translation problem.
pub struct Nets {
    pub g_a: Generator,
    pub g_b: Generator,
    pub d_a: Discriminator,
    pub d_b: Discriminator,
}

/// Full generator objective `λ₁·L_ucyc + λ₂·L_adv^G` with dropout off.
/// Returns the graph, the loss and the bound generator parameter vars.
pub fn generator_objective(nets: &Nets, a: &Tensor, b: &Tensor, w: LossWeights) -> (Graph, Var, Vec<Var>) {
    let mut g = Graph::new();
    let pa = nets.g_a.bind(&mut g, true);
    let pb = nets.g_b.bind(&mut g, true);
    let da = nets.d_a.bind(&mut g, false);
    let db = nets.d_b.bind(&mut g, false);
    let av = g.constant(a.clone());
    let bv = g.constant(b.clone());
    let fake_b = nets.g_a.forward_ggd(&mut g, &pa, av, None).unwrap();
    let rec_a = nets.g_b.forward_ggd(&mut g, &pb, fake_b.mean, None).unwrap();
    let fake_a = nets.g_b.forward_ggd(&mut g, &pb, bv, None).unwrap();
    let rec_b = nets.g_a.forward_ggd(&mut g, &pa, fake_a.mean, None).unwrap();
    let ucyc = loss_ucyc(
        &mut g,
        CycleTerms { recon: rec_a.mean, alpha: rec_a.alpha, beta: rec_a.beta, target: av },
        CycleTerms { recon: rec_b.mean, alpha: rec_b.alpha, beta: rec_b.beta, target: bv },
    )
    .unwrap();
    let s_fb = nets.d_a.forward(&mut g, &da, fake_b.mean).unwrap();
    let s_fa = nets.d_b.forward(&mut g, &db, fake_a.mean).unwrap();
    let adv = adv_generator_loss(&mut g, s_fb, s_fa).unwrap();
    let total = total_generator_loss(&mut g, ucyc, adv, w).unwrap();
    let mut vars = pa.vars().to_vec();
    vars.extend_from_slice(pb.vars());
    (g, total, vars)
}

/// Scalar `i` of parameter tensor `k`, counting G_A's tensors before G_B's.
fn generator_scalar(nets: &mut Nets, n_a: usize, k: usize, i: usize) -> &mut f64 {
    let (store, idx) = if k < n_a { (nets.g_a.params_mut(), k) } else { (nets.g_b.params_mut(), k - n_a) };
    &mut store.values_mut()[idx].data_mut()[i]
}

/// Finite-difference check of the full generator objective against every
/// scalar parameter of both generators. Returns (worst per-tensor relative
/// error, global relative error, parameter count).
pub fn composite_grad_check(nets: &mut Nets, a: &Tensor, b: &Tensor, w: LossWeights) -> (f64, f64, usize) {
    let (g, loss, vars) = generator_objective(nets, a, b, w);
    let grads = g.backward(loss).unwrap();
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .map(|&v| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).numel()]))
        .collect();
    drop(g);
    let value = |nets: &Nets| {
        let (g, loss, _) = generator_objective(nets, a, b, w);
        g.value(loss).item().unwrap()
    };
    let n_a = nets.g_a.params().len();
    let mut numeric: Vec<Vec<f64>> = analytic.iter().map(|v| vec![0.0; v.len()]).collect();
    for (k, num) in numeric.iter_mut().enumerate() {
        for i in 0..num.len() {
            let orig = *generator_scalar(nets, n_a, k, i);
            *generator_scalar(nets, n_a, k, i) = orig + FD_STEP_COMPOSITE;
            let plus = value(nets);
            *generator_scalar(nets, n_a, k, i) = orig - FD_STEP_COMPOSITE;
            let minus = value(nets);
            *generator_scalar(nets, n_a, k, i) = orig;
            num[i] = (plus - minus) / (2.0 * FD_STEP_COMPOSITE);
        }
    }
    let worst = analytic.iter().zip(&numeric).map(|(a, n)| rel_err(a, n, GRAD_FLOOR)).fold(0.0, f64::max);
    let flat_a: Vec<f64> = analytic.concat();
    let flat_n: Vec<f64> = numeric.concat();
    (worst, rel_err(&flat_a, &flat_n, 0.0), flat_a.len())
}

/// Distinct values in random order, so maxpool windows have no near-ties.
fn spaced(shape: &[usize], seed: u64) -> Tensor {
    use rand::seq::SliceRandom;
    let n: usize = shape.iter().product();
    let mut v: Vec<f64> = (0..n).map(|i| i as f64 * 0.01 - 0.3).collect();
    v.shuffle(&mut rng(seed));
    Tensor::new(shape.to_vec(), v).unwrap()
}

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> ugac::Result<Var>>;

/// Every differentiable primitive with inputs away from its kinks, paired
/// with the worst relative gradient error found.
pub fn primitive_suite() -> Vec<(&'static str, f64)> {
    let u = uniform;
    let cases: Vec<(&'static str, Vec<Tensor>, Build)> = vec![
        (
            "conv2d k3 s1 p1",
            vec![u(&[2, 3, 8, 8], -1.0, 1.0, 1), u(&[4, 3, 3, 3], -0.5, 0.5, 2), u(&[4], -0.5, 0.5, 3)],
            Box::new(|g, v| g.conv2d(v[0], v[1], Some(v[2]), 1, 1)),
        ),
        (
            "conv2d k4 s2 p1",
            vec![u(&[1, 2, 8, 8], -1.0, 1.0, 4), u(&[3, 2, 4, 4], -0.5, 0.5, 5), u(&[3], -0.5, 0.5, 6)],
            Box::new(|g, v| g.conv2d(v[0], v[1], Some(v[2]), 2, 1)),
        ),
        (
            "conv2d k1 no bias",
            vec![u(&[2, 3, 5, 5], -1.0, 1.0, 7), u(&[2, 3, 1, 1], -0.5, 0.5, 8)],
            Box::new(|g, v| g.conv2d(v[0], v[1], None, 1, 0)),
        ),
        ("maxpool2d", vec![spaced(&[2, 2, 6, 6], 9)], Box::new(|g, v| g.maxpool2d(v[0], 2))),
        ("upsample_bilinear2x", vec![u(&[2, 2, 3, 4], -1.0, 1.0, 10)], Box::new(|g, v| g.upsample_bilinear2x(v[0]))),
        (
            "instance_norm",
            vec![u(&[2, 3, 4, 4], -1.0, 1.0, 11), u(&[3], 0.5, 1.5, 12), u(&[3], -0.5, 0.5, 13)],
            Box::new(|g, v| g.instance_norm(v[0], v[1], v[2])),
        ),
        (
            "add (broadcast)",
            vec![u(&[2, 3, 4], -1.0, 1.0, 14), u(&[4], -1.0, 1.0, 15)],
            Box::new(|g, v| g.add(v[0], v[1])),
        ),
        (
            "sub (broadcast)",
            vec![u(&[3, 4], -1.0, 1.0, 16), u(&[2, 3, 4], -1.0, 1.0, 17)],
            Box::new(|g, v| g.sub(v[0], v[1])),
        ),
        ("mul", vec![u(&[2, 5], -1.0, 1.0, 18), u(&[2, 5], -1.0, 1.0, 19)], Box::new(|g, v| g.mul(v[0], v[1]))),
        (
            "div (broadcast)",
            vec![u(&[2, 5], -1.0, 1.0, 20), u(&[1], 0.5, 2.0, 21)],
            Box::new(|g, v| g.div(v[0], v[1])),
        ),
        ("abs", vec![u(&[10], 0.1, 1.0, 22).map(|x| if x > 0.55 { -x } else { x })], Box::new(|g, v| Ok(g.abs(v[0])))),
        (
            "pow",
            vec![u(&[6], 0.2, 3.0, 23), u(&[6], -1.5, 2.5, 24)],
            Box::new(|g, v| g.pow(v[0], v[1])),
        ),
        (
            "abs_pow",
            vec![u(&[6], 0.2, 2.0, 25).map(|x| if x > 1.1 { -x } else { x }), u(&[6], 0.3, 3.0, 26)],
            Box::new(|g, v| g.abs_pow(v[0], v[1])),
        ),
        ("log", vec![u(&[8], 0.1, 3.0, 27)], Box::new(|g, v| g.log(v[0]))),
        ("exp", vec![u(&[8], -2.0, 2.0, 28)], Box::new(|g, v| Ok(g.exp(v[0])))),
        ("relu", vec![u(&[8], 0.05, 1.0, 29).map(|x| if x > 0.5 { -x } else { x })], Box::new(|g, v| Ok(g.relu(v[0])))),
        (
            "leaky_relu",
            vec![u(&[8], 0.05, 1.0, 30).map(|x| if x > 0.5 { -x } else { x })],
            Box::new(|g, v| Ok(g.leaky_relu(v[0], 0.2))),
        ),
        ("recip", vec![u(&[8], 0.2, 3.0, 31)], Box::new(|g, v| g.recip(v[0]))),
        ("log_gamma", vec![u(&[8], 0.1, 12.0, 32)], Box::new(|g, v| g.log_gamma(v[0]))),
        (
            "clamp",
            vec![Tensor::new(vec![4], vec![-2.0, -0.3, 0.4, 2.0]).unwrap()],
            Box::new(|g, v| Ok(g.clamp(v[0], -1.0, 1.0))),
        ),
        ("neg / scale / shift", vec![u(&[5], -1.0, 1.0, 33)], Box::new(|g, v| {
            let n = g.neg(v[0]);
            let s = g.mul_scalar(n, 2.5);
            Ok(g.add_scalar(s, 0.7))
        })),
        (
            "concat (channels)",
            vec![u(&[2, 1, 3, 3], -1.0, 1.0, 34), u(&[2, 2, 3, 3], -1.0, 1.0, 35)],
            Box::new(|g, v| g.concat(&[v[0], v[1]], 1)),
        ),
        (
            "concat (batch)",
            vec![u(&[1, 2, 3], -1.0, 1.0, 36), u(&[2, 2, 3], -1.0, 1.0, 37)],
            Box::new(|g, v| g.concat(&[v[0], v[1]], 0)),
        ),
        ("mean", vec![u(&[3, 4], -1.0, 1.0, 38)], Box::new(|g, v| Ok(g.mean(v[0])))),
        ("sum", vec![u(&[3, 4], -1.0, 1.0, 39)], Box::new(|g, v| Ok(g.sum(v[0])))),
        (
            "dropout (fixed mask)",
            vec![u(&[4, 8], -1.0, 1.0, 40)],
            Box::new(|g, v| g.dropout(v[0], 0.3, true, &mut rng(41))),
        ),
    ];
    cases.into_iter().map(|(name, inputs, build)| (name, grad_check(&inputs, build))).collect()
}

/// Generator pair (a plain U-Net cascaded into a three-headed one) with
/// small discriminators, sized for a 1×1×16×16 input.
pub fn composite_nets(seed: u64) -> Nets {
    use ugac::nets::{DiscriminatorConfig, GeneratorConfig};
    let gc = GeneratorConfig { base_width: 4, depth: 1, cascade_len: 2, ..GeneratorConfig::default() };
    let dc = DiscriminatorConfig { base_width: 4, n_layers: 1, ..DiscriminatorConfig::default() };
    let mut r = rng(seed);
    Nets {
        g_a: Generator::new(gc.clone(), &mut r).unwrap(),
        g_b: Generator::new(gc, &mut r).unwrap(),
        d_a: Discriminator::new(dc.clone(), &mut r).unwrap(),
        d_b: Discriminator::new(dc, &mut r).unwrap(),
    }
}

fn simpson_step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + simpson_step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
}

/// Adaptive Simpson quadrature of `f` over `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

/// Total mass of the GGD density: twice the integral over `[0, R·α]` (the
/// cusp at the mode sits on the endpoint), with R large enough that the
/// tail beyond it is below e^{-60}.
pub fn ggd_mass(alpha: f64, beta: f64) -> f64 {
    use ugac::ggd::{ggd_pdf, GgdParams};
    let p = GgdParams::new(0.0, alpha, beta).unwrap();
    let r = alpha * 40f64.max(60f64.powf(1.0 / beta));
    let f = |x: f64| ggd_pdf(x, &p).unwrap();
    // Split the positive half-line geometrically so the peak is resolved.
    let mut edges = vec![0.0];
    let mut e = alpha * 1e-3;
    while e < r {
        edges.push(e);
        e *= 4.0;
    }
    edges.push(r);
    2.0 * edges.windows(2).map(|w| simpson(&f, w[0], w[1], 1e-12)).sum::<f64>()
}

/// Sample variance about the known mean 0 of `n` GGD draws.
pub fn mc_variance(alpha: f64, beta: f64, n: usize, seed: u64) -> f64 {
    use ugac::ggd::{ggd_sample, GgdParams};
    let p = GgdParams::new(0.0, alpha, beta).unwrap();
    let xs = ggd_sample(&p, n, &mut rng(seed)).unwrap();
    xs.iter().map(|x| x * x).sum::<f64>() / n as f64
}

/// Scale/shape pairs for the variance comparison (includes (1,2) and (1,1)).
pub const VARIANCE_GRID: [(f64, f64); 9] =
    [(1.0, 2.0), (1.0, 1.0), (0.5, 1.5), (2.0, 1.0), (0.1, 2.0), (3.0, 3.0), (1.0, 4.0), (0.7, 1.2), (1.5, 2.5)];

/// Straightforward Adam with bias correction, one moment pair per tensor.
pub struct RefAdam {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

impl RefAdam {
    pub fn new(params: &[Tensor]) -> Self {
        Self { m: params.iter().map(|p| vec![0.0; p.numel()]).collect(), v: params.iter().map(|p| vec![0.0; p.numel()]).collect(), t: 0 }
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Vec<f64>], lr: f64) {
        let (b1, b2, eps) = (0.9, 0.99, 1e-8);
        self.t += 1;
        for (k, p) in params.iter_mut().enumerate() {
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                let g = grads[k][i];
                self.m[k][i] = b1 * self.m[k][i] + (1.0 - b1) * g;
                self.v[k][i] = b2 * self.v[k][i] + (1.0 - b2) * g * g;
                let mh = self.m[k][i] / (1.0 - b1.powi(self.t));
                let vh = self.v[k][i] / (1.0 - b2.powi(self.t));
                *x -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }
}

fn squared_gap(g: &mut Graph, x: Var, target: f64) -> Var {
    let shifted = g.add_scalar(x, -target);
    let sq = g.mul(shifted, shifted).unwrap();
    g.mean(sq)
}

fn grads_for(g: &Graph, grads: &ugac::Gradients, vars: &[Var]) -> Vec<Vec<f64>> {
    vars.iter().map(|&v| grads.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; g.value(v).numel()])).collect()
}

/// Hand-written CycleGAN step with an L1 cycle loss: generator update, then
/// discriminator update on the pre-update fakes. Assumes dropout off and a
/// replay buffer that is not yet full (it hands back the new fakes).
pub struct L1Reference {
    pub nets: Nets,
    opt: [RefAdam; 4],
    lambda: (f64, f64),
}

impl L1Reference {
    pub fn new(nets: Nets, lambda: (f64, f64)) -> Self {
        let opt = [
            RefAdam::new(nets.g_a.params().values()),
            RefAdam::new(nets.g_b.params().values()),
            RefAdam::new(nets.d_a.params().values()),
            RefAdam::new(nets.d_b.params().values()),
        ];
        Self { nets, opt, lambda }
    }

    /// Returns (generator loss, discriminator loss).
    pub fn step(&mut self, a: &Tensor, b: &Tensor, lr: f64) -> (f64, f64) {
        let n = &self.nets;
        let mut g = Graph::new();
        let pa = n.g_a.bind(&mut g, true);
        let pb = n.g_b.bind(&mut g, true);
        let da = n.d_a.bind(&mut g, false);
        let db = n.d_b.bind(&mut g, false);
        let av = g.constant(a.clone());
        let bv = g.constant(b.clone());
        let fake_b = n.g_a.forward(&mut g, &pa, av, None).unwrap().mean;
        let rec_a = n.g_b.forward(&mut g, &pb, fake_b, None).unwrap().mean;
        let fake_a = n.g_b.forward(&mut g, &pb, bv, None).unwrap().mean;
        let rec_b = n.g_a.forward(&mut g, &pa, fake_a, None).unwrap().mean;
        let mut l1 = |x: Var, t: Var| {
            let d = g.sub(x, t).unwrap();
            let d = g.abs(d);
            g.mean(d)
        };
        let cyc_a = l1(rec_a, av);
        let cyc_b = l1(rec_b, bv);
        let cyc = g.add(cyc_a, cyc_b).unwrap();
        let s_fb = n.d_a.forward(&mut g, &da, fake_b).unwrap();
        let s_fa = n.d_b.forward(&mut g, &db, fake_a).unwrap();
        let adv_b = squared_gap(&mut g, s_fb, 1.0);
        let adv_a = squared_gap(&mut g, s_fa, 1.0);
        let adv = g.add(adv_b, adv_a).unwrap();
        let c = g.mul_scalar(cyc, self.lambda.0);
        let d = g.mul_scalar(adv, self.lambda.1);
        let total = g.add(c, d).unwrap();
        let loss_g = g.value(total).item().unwrap();
        let grads = g.backward(total).unwrap();
        let (ga, gb) = (grads_for(&g, &grads, pa.vars()), grads_for(&g, &grads, pb.vars()));
        let (fake_a_t, fake_b_t) = (g.value(fake_a).clone(), g.value(fake_b).clone());
        drop(g);
        self.opt[0].step(self.nets.g_a.params_mut().values_mut(), &ga, lr);
        self.opt[1].step(self.nets.g_b.params_mut().values_mut(), &gb, lr);

        let n = &self.nets;
        let mut g = Graph::new();
        let da = n.d_a.bind(&mut g, true);
        let db = n.d_b.bind(&mut g, true);
        let [bv, fbv, av, fav] = [b.clone(), fake_b_t, a.clone(), fake_a_t].map(|t| g.constant(t));
        let s1 = n.d_a.forward(&mut g, &da, bv).unwrap();
        let s2 = n.d_a.forward(&mut g, &da, fbv).unwrap();
        let s3 = n.d_b.forward(&mut g, &db, av).unwrap();
        let s4 = n.d_b.forward(&mut g, &db, fav).unwrap();
        let terms = [squared_gap(&mut g, s1, 1.0), squared_gap(&mut g, s2, 0.0), squared_gap(&mut g, s3, 1.0), squared_gap(&mut g, s4, 0.0)];
        let mut loss = terms[0];
        for &t in &terms[1..] {
            loss = g.add(loss, t).unwrap();
        }
        let loss_d = g.value(loss).item().unwrap();
        let grads = g.backward(loss).unwrap();
        let (gda, gdb) = (grads_for(&g, &grads, da.vars()), grads_for(&g, &grads, db.vars()));
        drop(g);
        self.opt[2].step(self.nets.d_a.params_mut().values_mut(), &gda, lr);
        self.opt[3].step(self.nets.d_b.params_mut().values_mut(), &gdb, lr);
        (loss_g, loss_d)
    }
}

/// Small training config for 16×16 toy images.
pub fn tiny_train_config(seed: u64) -> ugac::train::TrainConfig {
    use ugac::nets::{DiscriminatorConfig, GeneratorConfig};
    ugac::train::TrainConfig {
        epochs: 2,
        seed,
        generator: GeneratorConfig { base_width: 4, depth: 1, cascade_len: 1, ..GeneratorConfig::default() },
        discriminator: DiscriminatorConfig { base_width: 4, n_layers: 1, ..DiscriminatorConfig::default() },
        ..ugac::train::TrainConfig::default()
    }
}

/// Run `steps` steps of the library trainer in L1 mode and of the
/// independent reference from the same initialization. Returns the worst
/// absolute difference over losses and final parameters.
pub fn l1_equivalence(steps: usize, seed: u64) -> f64 {
    use ugac::train::{CycleMode, Trainer};
    let mut cfg = tiny_train_config(seed);
    cfg.cycle = CycleMode::L1;
    cfg.generator.dropout_p = 0.0;
    cfg.augment = false;
    let mut trainer = Trainer::new(cfg.clone()).unwrap();
    let mut r = rng(seed);
    let nets = Nets {
        g_a: Generator::new(cfg.generator.clone(), &mut r).unwrap(),
        g_b: Generator::new(cfg.generator.clone(), &mut r).unwrap(),
        d_a: Discriminator::new(cfg.discriminator.clone(), &mut r).unwrap(),
        d_b: Discriminator::new(cfg.discriminator.clone(), &mut r).unwrap(),
    };
    let mut reference = L1Reference::new(nets, (cfg.weights.lambda1, cfg.weights.lambda2));
    let ds = ugac::data::synth_shapes_dataset(2 * steps, 16, seed).unwrap();
    let mut worst: f64 = 0.0;
    let mut step_rng = rng(seed + 1);
    for s in 0..steps {
        let a = Tensor::stack_batch(&ds.domain_a[2 * s..2 * s + 2]).unwrap();
        let b = Tensor::stack_batch(&ds.domain_b[2 * s..2 * s + 2]).unwrap();
        let lr = ugac::train::cosine_lr(s as u64, steps as u64, cfg.lr0);
        let m = trainer.train_step(&a, &b, lr, &mut step_rng).unwrap();
        let (lg, ld) = reference.step(&a, &b, lr);
        worst = worst.max((m.loss_g - lg).abs()).max((m.loss_d - ld).abs());
    }
    let pairs = [
        (trainer.g_a.params(), reference.nets.g_a.params()),
        (trainer.g_b.params(), reference.nets.g_b.params()),
        (trainer.d_a.params(), reference.nets.d_a.params()),
        (trainer.d_b.params(), reference.nets.d_b.params()),
    ];
    for (x, y) in pairs {
        for (tx, ty) in x.values().iter().zip(y.values()) {
            for (p, q) in tx.data().iter().zip(ty.data()) {
                worst = worst.max((p - q).abs());
            }
        }
    }
    worst
}
