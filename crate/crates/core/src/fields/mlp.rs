use rand::Rng;

/// Fully connected ReLU network with a linear output layer.
///
/// Parameters are stored layer by layer: the weight matrix in `in x out`
/// row-major order followed by the bias vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub sizes: Vec<usize>,
    pub params: Vec<f64>,
    offsets: Vec<usize>,
}

/// Per-layer activations of one forward pass, reused across calls.
#[derive(Clone, Debug, Default)]
pub struct MlpTrace {
    /// `acts[0]` is the input, `acts[l]` the (post-ReLU) output of layer `l`.
    acts: Vec<Vec<f64>>,
    grads: Vec<Vec<f64>>,
}

impl MlpTrace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// Gradient with respect to the input from the last backward pass.
    pub fn input_grad(&self) -> &[f64] {
        &self.grads[0]
    }
}

impl Mlp {
    /// Network with `sizes = [input, hidden..., output]` and all parameters zero.
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs input and output sizes");
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut n = 0;
        for w in sizes.windows(2) {
            offsets.push(n);
            n += w[0] * w[1] + w[1];
        }
        offsets.push(n);
        Self { sizes: sizes.to_vec(), params: vec![0.0; n], offsets }
    }

    /// Uniform `±1/sqrt(fan_in)` initialization; the last layer is left at
    /// zero when `zero_last` is set.
    pub fn init(sizes: &[usize], rng: &mut impl Rng, zero_last: bool) -> Self {
        let mut mlp = Self::zeros(sizes);
        let layers = mlp.layers();
        for l in 0..layers {
            if zero_last && l + 1 == layers {
                break;
            }
            let bound = 1.0 / (mlp.sizes[l] as f64).sqrt();
            let range = mlp.offsets[l]..mlp.offsets[l + 1];
            for v in &mut mlp.params[range] {
                *v = rng.gen_range(-bound..bound);
            }
        }
        mlp
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Option<Self> {
        let mut mlp = Self::zeros(sizes);
        if params.len() != mlp.params.len() {
            return None;
        }
        mlp.params = params;
        Some(mlp)
    }

    pub fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Range of the parameters of layer `l`.
    pub fn layer_range(&self, l: usize) -> std::ops::Range<usize> {
        self.offsets[l]..self.offsets[l + 1]
    }

    pub fn new_trace(&self) -> MlpTrace {
        MlpTrace {
            acts: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
            grads: self.sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    /// Runs the network on the input already stored in `trace` (see
    /// [`Mlp::input_mut`]).
    pub fn forward(&self, trace: &mut MlpTrace) {
        self.run(trace, None, self.sizes[0]);
    }

    /// Runs the network using only the first `rows` inputs; the first layer
    /// starts from `base` (see [`Mlp::first_layer_base`]) instead of its bias.
    pub fn forward_with_base(&self, trace: &mut MlpTrace, base: &[f64], rows: usize) {
        self.run(trace, Some(base), rows);
    }

    /// Bias of the first layer plus the contribution of the trailing inputs
    /// `x_tail`, which occupy the input slots from `first_row` on.
    pub fn first_layer_base(&self, x_tail: &[f64], first_row: usize, base: &mut [f64]) {
        let n_out = self.sizes[1];
        let (w, b) = self.params[..self.offsets[1]].split_at(self.sizes[0] * n_out);
        base.copy_from_slice(b);
        accumulate_rows(base, x_tail, &w[first_row * n_out..]);
    }

    /// Adds the first-layer weight gradient of the trailing inputs, given the
    /// sum of first-layer output gradients collected by
    /// [`Mlp::backward_rows`] over all passes that shared them.
    pub fn first_layer_tail_grad(&self, x_tail: &[f64], first_row: usize, dy_sum: &[f64], grad: &mut [f64]) {
        let n_out = self.sizes[1];
        let gw = &mut grad[first_row * n_out..self.sizes[0] * n_out];
        for (i, &xi) in x_tail.iter().enumerate() {
            if xi != 0.0 {
                axpy(&mut gw[i * n_out..(i + 1) * n_out], xi, dy_sum);
            }
        }
    }

    fn run(&self, trace: &mut MlpTrace, base: Option<&[f64]>, rows: usize) {
        let layers = self.layers();
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[self.offsets[l]..self.offsets[l] + n_in * n_out];
            let b = &self.params[self.offsets[l] + n_in * n_out..self.offsets[l + 1]];
            let (head, tail) = trace.acts.split_at_mut(l + 1);
            let y = &mut tail[0];
            match (l, base) {
                (0, Some(base)) => {
                    y.copy_from_slice(base);
                    accumulate_rows(y, &head[0][..rows], w);
                }
                _ => {
                    y.copy_from_slice(b);
                    accumulate_rows(y, &head[l], w);
                }
            }
            if l + 1 < layers {
                for v in y.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    pub fn input_mut<'a>(&self, trace: &'a mut MlpTrace) -> &'a mut [f64] {
        &mut trace.acts[0]
    }

    /// Backpropagates `d_out` through the pass recorded in `trace`, adding
    /// parameter gradients to `grad`. The input gradient is computed only when
    /// `want_input` is set.
    pub fn backward(&self, trace: &mut MlpTrace, d_out: &[f64], grad: &mut [f64], want_input: bool) {
        let rows = self.sizes[0];
        self.backward_rows(trace, d_out, grad, rows, if want_input { rows } else { 0 }, None);
    }

    /// Backward pass in which only the first `rows` inputs receive
    /// first-layer weight gradients and the first `input_rows` inputs an
    /// input gradient. The first-layer output gradient is added to `dy_sum`
    /// when given.
    pub fn backward_rows(
        &self,
        trace: &mut MlpTrace,
        d_out: &[f64],
        grad: &mut [f64],
        rows: usize,
        input_rows: usize,
        dy_sum: Option<&mut [f64]>,
    ) {
        let layers = self.layers();
        trace.grads[layers].copy_from_slice(d_out);
        let mut dy_sum = dy_sum;
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let w = &self.params[off..off + n_in * n_out];
            let (gw, gb) = grad[off..self.offsets[l + 1]].split_at_mut(n_in * n_out);
            let (ghead, gtail) = trace.grads.split_at_mut(l + 1);
            let dy = &mut gtail[0];
            if l + 1 < layers {
                // ReLU mask from the stored post-activation output.
                for (g, &a) in dy.iter_mut().zip(&trace.acts[l + 1]) {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            for (g, &d) in gb.iter_mut().zip(dy.iter()) {
                *g += d;
            }
            let x = &trace.acts[l];
            let (n_rows, n_dx) = if l == 0 {
                if let Some(sum) = dy_sum.as_deref_mut() {
                    for (s, &d) in sum.iter_mut().zip(dy.iter()) {
                        *s += d;
                    }
                }
                (rows, input_rows)
            } else {
                (n_in, n_in)
            };
            for (i, &xi) in x[..n_rows].iter().enumerate() {
                if xi != 0.0 {
                    axpy(&mut gw[i * n_out..(i + 1) * n_out], xi, dy);
                }
            }
            let dx = &mut ghead[l];
            for i in 0..n_dx {
                dx[i] = dot(&w[i * n_out..(i + 1) * n_out], dy);
            }
        }
    }

    /// Convenience single-input evaluation.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut t = self.new_trace();
        t.acts[0].copy_from_slice(x);
        self.forward(&mut t);
        t.output().to_vec()
    }
}

/// `y += Σ_i x_i w_i` where `w_i` is row `i` of the row-major matrix `w`
/// with `y.len()` columns. Outputs are processed in register-sized blocks.
#[inline]
fn accumulate_rows(y: &mut [f64], x: &[f64], w: &[f64]) {
    const B: usize = 8;
    let n_out = y.len();
    let mut ob = 0;
    while ob + B <= n_out {
        let mut acc = [0.0; B];
        acc.copy_from_slice(&y[ob..ob + B]);
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let r = &w[i * n_out + ob..i * n_out + ob + B];
            for k in 0..B {
                acc[k] += xi * r[k];
            }
        }
        y[ob..ob + B].copy_from_slice(&acc);
        ob += B;
    }
    if ob < n_out {
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let r = &w[i * n_out..(i + 1) * n_out];
            for k in ob..n_out {
                y[k] += xi * r[k];
            }
        }
    }
}

/// `y += a * x` over equal-length slices.
#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    let n = y.len().min(x.len());
    let (y, x) = (&mut y[..n], &x[..n]);
    let mut yc = y.chunks_exact_mut(4);
    let mut xc = x.chunks_exact(4);
    for (yy, xx) in (&mut yc).zip(&mut xc) {
        yy[0] += a * xx[0];
        yy[1] += a * xx[1];
        yy[2] += a * xx[2];
        yy[3] += a * xx[3];
    }
    for (yy, &xx) in yc.into_remainder().iter_mut().zip(xc.remainder()) {
        *yy += a * xx;
    }
}

/// Dot product with four interleaved partial sums.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let ac = a.chunks_exact(4);
    let bc = b.chunks_exact(4);
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ar.iter().zip(br) {
        s += x * y;
    }
    s
}
