//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ndarray::{Array2, ArrayView2};
use pandemic_policy::nn::{mse_loss_batch, Gradients, Network, NetworkSpec};
use pandemic_policy::scenario::Scenario;
use pandemic_policy::seeded_rng;
use rand::Rng;
use regex::Regex;

// Plain-float copy of the update rule.
pub fn straight_line_step(x: [f64; 4], a: f64, b: f64, g: f64, k: f64) -> [f64; 4] {
    let [s, e, i, r] = x;
    let flow_se = k * b * s * i;
    let flow_ei = a * e;
    let flow_ir = g * i;
    [s - flow_se, e + flow_se - flow_ei, i + flow_ei - flow_ir, r + flow_ir]
}

/// Total reward recomputed day by day from the model equations, with a
/// regex deciding whether each prefix still has the allowed phase order.
pub fn straight_line_reward(sc: &Scenario, actions: &[u8]) -> f64 {
    let order = Regex::new("^0*1*2*3*0*$").unwrap();
    let n = sc.horizon;
    let (a, b, g) = (sc.params.alpha, sc.params.beta, sc.params.gamma);
    let mut x = [sc.initial.s, sc.initial.e, sc.initial.i, sc.initial.r];
    let mut prefix = String::new();
    let mut total = 0.0;
    for day in 1..=n {
        let act = actions[day - 1];
        let frac = if n > 1 { (day - 1) as f64 / (n - 1) as f64 } else { 0.0 };
        let theta = sc.theta.start + (sc.theta.end - sc.theta.start) * frac;
        let beds = (sc.beds.start + (sc.beds.end - sc.beds.start) * frac) / 1000.0;
        x = straight_line_step(x, a, b, g, sc.phases[act as usize].delta * theta);
        for v in &mut x {
            *v = v.clamp(0.0, 1.0);
        }
        prefix.push(char::from(b'0' + act));
        total += if sc.pattern_enabled && !order.is_match(&prefix) {
            sc.pattern_penalty
        } else if sc.icu_fraction * x[2] > beds {
            sc.bed_penalty
        } else {
            sc.phases[act as usize].daily_reward
        };
    }
    total
}


pub fn loss(net: &Network, x: ArrayView2<'_, f64>, y: &Array2<f64>) -> f64 {
    mse_loss_batch(&net.forward_batch(x).unwrap(), y).unwrap().0
}

pub fn analytic(net: &Network, x: ArrayView2<'_, f64>, y: &Array2<f64>) -> Gradients {
    let cache = net.forward_cached(x).unwrap();
    let (_, upstream) = mse_loss_batch(cache.output(), y).unwrap();
    net.backward(&cache, &upstream).unwrap()
}

/// Parameter address: layer, is-bias, row, column.
pub type Param = (usize, bool, usize, usize);

pub fn get(net: &Network, (l, bias, r, c): Param) -> f64 {
    let layer = &net.layers()[l];
    if bias {
        layer.bias[r]
    } else {
        layer.weights[[r, c]]
    }
}

pub fn set(net: &mut Network, (l, bias, r, c): Param, v: f64) {
    let layer = &mut net.layers_mut()[l];
    if bias {
        layer.bias[r] = v;
    } else {
        layer.weights[[r, c]] = v;
    }
}

pub fn grad_of(g: &Gradients, (l, bias, r, c): Param) -> f64 {
    if bias {
        g.biases[l][r]
    } else {
        g.weights[l][[r, c]]
    }
}

pub fn central_difference(net: &mut Network, p: Param, x: ArrayView2<'_, f64>, y: &Array2<f64>, h: f64) -> f64 {
    let orig = get(net, p);
    set(net, p, orig + h);
    let up = loss(net, x, y);
    set(net, p, orig - h);
    let down = loss(net, x, y);
    set(net, p, orig);
    (up - down) / (2.0 * h)
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

pub fn random_batch(rows: usize, cols: usize, scale: f64, seed: u64) -> Array2<f64> {
    let mut rng = seeded_rng(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-scale..scale))
}

/// Largest relative error between backprop and central differences over
/// `samples` randomly chosen parameters of a freshly initialized network.
pub fn full_network_gradient_error(samples: usize) -> f64 {
    let mut net = Network::new(NetworkSpec::default(), &mut seeded_rng(7)).unwrap();
    let x = random_batch(8, 25, 2.0, 20);
    let y = random_batch(8, 4, 3.0, 21);
    let g = analytic(&net, x.view(), &y);

    let mut rng = seeded_rng(22);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < samples {
        let l = rng.random_range(0..net.layers().len());
        let (rows, cols) = net.layers()[l].weights.dim();
        let p = (l, rng.random_bool(0.2), rng.random_range(0..rows), rng.random_range(0..cols));
        let a = grad_of(&g, p);
        let fd = central_difference(&mut net, p, x.view(), &y, 1e-5);
        // Skip parameters behind dead units.
        if a == 0.0 && fd.abs() < 1e-10 {
            continue;
        }
        worst = worst.max(relative_error(a, fd));
        checked += 1;
    }
    worst
}
