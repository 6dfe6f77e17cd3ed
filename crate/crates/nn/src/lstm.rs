//! Single LSTM layer unrolled over a sequence, zero initial state.
//!
//! Gates are stacked row-wise in the order input, forget, candidate, output:
//!
//! ```text
//! a = W [x; h_prev] + b          (4H × B)
//! i = σ(a_i)  f = σ(a_f)  g = tanh(a_g)  o = σ(a_o)
//! c = f ⊙ c_prev + i ⊙ g
//! h = o ⊙ tanh(c)
//! ```

use nalgebra::DMatrix;
use rand::Rng;

use crate::activation::sigmoid;
use crate::error::{Error, Result};
use crate::param::{join, Module, Param};

#[derive(Debug, Clone)]
struct Step {
    xh: DMatrix<f64>,
    i: DMatrix<f64>,
    f: DMatrix<f64>,
    g: DMatrix<f64>,
    o: DMatrix<f64>,
    c_prev: DMatrix<f64>,
    tanh_c: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Lstm {
    /// `4H × (I + H)`.
    pub w: Param,
    /// `4H × 1`.
    pub b: Param,
    input: usize,
    hidden: usize,
    cache: Vec<Step>,
}

impl Lstm {
    /// Glorot-uniform weights, zero biases except the forget gate at +1.
    pub fn new<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let w = Param::glorot(rng, 4 * hidden, input + hidden, input + hidden, hidden);
        let mut b = Param::zeros(4 * hidden, 1);
        b.value.rows_mut(hidden, hidden).fill(1.0);
        Self { w, b, input, hidden, cache: Vec::new() }
    }

    pub fn input_len(&self) -> usize {
        self.input
    }

    pub fn hidden_len(&self) -> usize {
        self.hidden
    }

    /// Hidden states for every step, each `H × B`.
    pub fn forward(&mut self, xs: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
        let (ni, nh) = (self.input, self.hidden);
        let batch = xs.first().map_or(0, |x| x.ncols());
        let mut h = DMatrix::zeros(nh, batch);
        let mut c = DMatrix::zeros(nh, batch);
        self.cache.clear();
        let mut out = Vec::with_capacity(xs.len());
        for x in xs {
            if x.nrows() != ni || x.ncols() != batch {
                return Err(Error::Shape(format!(
                    "LSTM expects {ni} × {batch} inputs, got {} × {}",
                    x.nrows(),
                    x.ncols()
                )));
            }
            let mut xh = DMatrix::zeros(ni + nh, batch);
            xh.rows_mut(0, ni).copy_from(x);
            xh.rows_mut(ni, nh).copy_from(&h);
            let mut a = &self.w.value * &xh;
            for mut col in a.column_iter_mut() {
                col += self.b.value.column(0);
            }
            let i = a.rows(0, nh).map(sigmoid);
            let f = a.rows(nh, nh).map(sigmoid);
            let g = a.rows(2 * nh, nh).map(f64::tanh);
            let o = a.rows(3 * nh, nh).map(sigmoid);
            let c_prev = c;
            c = f.component_mul(&c_prev) + i.component_mul(&g);
            let tanh_c = c.map(f64::tanh);
            h = o.component_mul(&tanh_c);
            out.push(h.clone());
            self.cache.push(Step { xh, i, f, g, o, c_prev, tanh_c });
        }
        Ok(out)
    }

    /// Backpropagation through time. `dhs[t]` is `dL/dh_t` from above;
    /// returns `dL/dx_t` for every step.
    pub fn backward(&mut self, dhs: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
        let (ni, nh) = (self.input, self.hidden);
        let steps = self.cache.len();
        assert_eq!(dhs.len(), steps, "backward sequence length");
        let batch = dhs.first().map_or(0, |d| d.ncols());
        let mut dh_next = DMatrix::zeros(nh, batch);
        let mut dc_next = DMatrix::zeros(nh, batch);
        let mut dxs = vec![DMatrix::zeros(ni, batch); steps];
        for t in (0..steps).rev() {
            let s = &self.cache[t];
            let dh = &dhs[t] + &dh_next;
            let d_o = dh.component_mul(&s.tanh_c);
            let dc = dh.component_mul(&s.o).zip_map(&s.tanh_c, |v, tc| v * (1.0 - tc * tc)) + &dc_next;
            let mut da = DMatrix::zeros(4 * nh, batch);
            da.rows_mut(0, nh)
                .copy_from(&dc.component_mul(&s.g).zip_map(&s.i, |d, i| d * i * (1.0 - i)));
            da.rows_mut(nh, nh)
                .copy_from(&dc.component_mul(&s.c_prev).zip_map(&s.f, |d, f| d * f * (1.0 - f)));
            da.rows_mut(2 * nh, nh)
                .copy_from(&dc.component_mul(&s.i).zip_map(&s.g, |d, g| d * (1.0 - g * g)));
            da.rows_mut(3 * nh, nh)
                .copy_from(&d_o.zip_map(&s.o, |d, o| d * o * (1.0 - o)));
            dc_next = dc.component_mul(&s.f);
            self.w.grad += &da * s.xh.transpose();
            self.b.grad += da.column_sum();
            let dxh = self.w.value.transpose() * &da;
            dxs[t] = dxh.rows(0, ni).into_owned();
            dh_next = dxh.rows(ni, nh).into_owned();
        }
        dxs
    }
}

impl Module for Lstm {
    fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param)) {
        f(&join(prefix, "w"), &mut self.w);
        f(&join(prefix, "b"), &mut self.b);
    }
}
