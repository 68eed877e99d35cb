//! The spacetime field network and its color head.
//!
//! The trunk maps an encoded `(p, t)` to a feature vector; three linear heads
//! read density, trajectory coefficients and a color embedding off it. The
//! color head maps `[embedding ∥ encode(d, t')]` to RGB.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{Tape, Var};
use crate::camera::Vec3;
use crate::encoding::{encode_rows, encode_var, encoded_len, positional_encode};
use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;
use crate::trajectory::TrajectoryCoeffs;

#[derive(Debug, Clone, PartialEq)]
pub struct FieldConfig {
    /// Sequence length `T`.
    pub num_frames: usize,
    /// DCT coefficients per axis `K`.
    pub num_coeffs: usize,
    pub trunk_width: usize,
    pub trunk_depth: usize,
    /// Index of the trunk layer whose input is `[encoding ∥ hidden]`.
    pub skip_layer: Option<usize>,
    pub embed_width: usize,
    pub color_width: usize,
    /// Hidden layers in the color head.
    pub color_layers: usize,
    pub pos_freqs: usize,
    pub dir_freqs: usize,
}

impl FieldConfig {
    /// Full-size network for a `num_frames` sequence.
    pub fn standard(num_frames: usize, num_coeffs: usize) -> Self {
        FieldConfig {
            num_frames,
            num_coeffs,
            trunk_width: 256,
            trunk_depth: 8,
            skip_layer: Some(5),
            embed_width: 128,
            color_width: 128,
            color_layers: 2,
            pos_freqs: 10,
            dir_freqs: 4,
        }
    }

    /// Encoded `(p, t)` width.
    pub fn input_len(&self) -> usize {
        encoded_len(4, self.pos_freqs, true)
    }

    fn pos_len(&self) -> usize {
        encoded_len(3, self.pos_freqs, true)
    }

    /// Encoded `(d, t')` width.
    pub fn dir_len(&self) -> usize {
        encoded_len(4, self.dir_freqs, true)
    }

    fn has_skip(&self) -> bool {
        matches!(self.skip_layer, Some(s) if s > 0 && s < self.trunk_depth)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_frames < 2 {
            return Err(Error::invalid("need at least two frames"));
        }
        if self.num_coeffs == 0 || self.num_coeffs >= self.num_frames {
            return Err(Error::invalid(format!(
                "need 1 <= K <= T-1, got K={} T={}",
                self.num_coeffs, self.num_frames
            )));
        }
        if self.trunk_width == 0 || self.trunk_depth == 0 || self.embed_width == 0 {
            return Err(Error::invalid("network widths must be positive"));
        }
        if self.color_layers > 0 && self.color_width == 0 {
            return Err(Error::invalid("color width must be positive"));
        }
        if self.pos_freqs == 0 || self.dir_freqs == 0 {
            return Err(Error::invalid("need at least one encoding frequency"));
        }
        Ok(())
    }

    /// Layer shapes `(name, fan_in, fan_out)` in parameter order.
    pub fn layers(&self) -> Vec<(String, usize, usize)> {
        let w = self.trunk_width;
        let enc = self.input_len();
        let mut out = Vec::new();
        for i in 0..self.trunk_depth {
            let fan_in = if i == 0 {
                enc
            } else if self.has_skip() && Some(i) == self.skip_layer {
                enc + w
            } else {
                w
            };
            out.push((format!("trunk.{i}"), fan_in, w));
        }
        out.push(("sigma".into(), w, 1));
        out.push(("phi".into(), w, 3 * self.num_coeffs));
        out.push(("omega".into(), w, self.embed_width));
        let mut fan_in = self.embed_width + self.dir_len();
        for i in 0..self.color_layers {
            out.push((format!("color.{i}"), fan_in, self.color_width));
            fan_in = self.color_width;
        }
        out.push(("color.out".into(), fan_in, 3));
        out
    }

    /// Closed-form parameter count.
    pub fn param_count(&self) -> usize {
        let w = self.trunk_width;
        let enc = self.input_len();
        let skip = if self.has_skip() { enc * w } else { 0 };
        let trunk = (enc * w + w) + (self.trunk_depth - 1) * (w * w + w) + skip;
        let heads = (w + 1) + (w + 1) * 3 * self.num_coeffs + (w + 1) * self.embed_width;
        let cin = self.embed_width + self.dir_len();
        let color = if self.color_layers == 0 {
            cin * 3 + 3
        } else {
            let h = self.color_width;
            (cin * h + h) + (self.color_layers - 1) * (h * h + h) + (h * 3 + 3)
        };
        trunk + heads + color
    }

    /// Normalized time fed to the encodings.
    pub fn normalize_time(&self, t: f64) -> f64 {
        t / (self.num_frames - 1) as f64
    }
}

/// Weights (`[fan_in, fan_out]`) and biases (`[1, fan_out]`) of every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    config: FieldConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl NetworkParams {
    /// Uniform He initialization (`±sqrt(6 / fan_in)`) with zero biases;
    /// the trajectory head starts at exactly zero.
    pub fn init(config: FieldConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, fan_in, fan_out) in config.layers() {
            let bound = math::sqrt(6.0 / fan_in as f64);
            let w: Vec<f64> = if name == "phi" {
                vec![0.0; fan_in * fan_out]
            } else {
                (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..bound))
                    .collect()
            };
            names.push(format!("{name}.weight"));
            tensors.push(Tensor::new([fan_in, fan_out], w)?);
            names.push(format!("{name}.bias"));
            tensors.push(Tensor::zeros([1, fan_out]));
        }
        let params = NetworkParams {
            config,
            names,
            tensors,
        };
        debug_assert_eq!(params.num_scalars(), params.config.param_count());
        if params.num_scalars() != params.config.param_count() {
            return Err(Error::invalid(
                "parameter layout disagrees with its closed form",
            ));
        }
        Ok(params)
    }

    /// Rebuilds from named tensors, checking every shape against `config`.
    pub fn from_tensors(config: FieldConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let mut expected = Vec::new();
        for (name, fan_in, fan_out) in config.layers() {
            expected.push((format!("{name}.weight"), vec![fan_in, fan_out]));
            expected.push((format!("{name}.bias"), vec![1, fan_out]));
        }
        if expected.len() != named.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                expected.len(),
                named.len()
            )));
        }
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for ((en, es), (n, t)) in expected.into_iter().zip(named) {
            if en != n || es.as_slice() != t.shape() {
                return Err(Error::invalid(format!(
                    "parameter {n} has shape {:?}, expected {en} with shape {es:?}",
                    t.shape()
                )));
            }
            names.push(n);
            tensors.push(t);
        }
        Ok(NetworkParams {
            config,
            names,
            tensors,
        })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Whether tensor `i` belongs to the trajectory head.
    pub fn is_trajectory_head(&self, i: usize) -> bool {
        self.names[i].starts_with("phi.")
    }

    /// Records the parameters on `tape`; `trainable(i)` picks which ones
    /// receive gradients.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: impl Fn(usize) -> bool) -> FieldVars<'t> {
        let vars = self
            .tensors
            .iter()
            .enumerate()
            .map(|(i, t)| tape.leaf(t.clone(), trainable(i)))
            .collect();
        FieldVars {
            config: self.config.clone(),
            vars,
        }
    }

    /// Records all parameters as constants.
    pub fn bind_const<'t>(&self, tape: &'t Tape) -> FieldVars<'t> {
        self.bind(tape, |_| false)
    }
}

/// Field outputs for a batch of points.
#[derive(Clone, Copy, Debug)]
pub struct FieldVarsOut<'t> {
    /// `[P, 3K]`
    pub phi: Var<'t>,
    /// `[P, E]`
    pub omega: Var<'t>,
    /// `[P, 1]`, nonnegative
    pub sigma: Var<'t>,
}

/// Network parameters recorded on a tape.
pub struct FieldVars<'t> {
    config: FieldConfig,
    vars: Vec<Var<'t>>,
}

impl<'t> FieldVars<'t> {
    /// Wraps variables laid out like [`NetworkParams::tensors`].
    pub fn from_vars(config: FieldConfig, vars: Vec<Var<'t>>) -> Result<Self> {
        let layers = config.layers();
        if vars.len() != 2 * layers.len() {
            return Err(Error::invalid(format!(
                "expected {} parameter variables, got {}",
                2 * layers.len(),
                vars.len()
            )));
        }
        for (i, (name, fan_in, fan_out)) in layers.iter().enumerate() {
            if vars[2 * i].shape() != [*fan_in, *fan_out]
                || vars[2 * i + 1].shape() != [1, *fan_out]
            {
                return Err(Error::invalid(format!(
                    "parameter {name} has the wrong shape"
                )));
            }
        }
        Ok(FieldVars { config, vars })
    }

    pub fn config(&self) -> &FieldConfig {
        &self.config
    }

    pub fn vars(&self) -> &[Var<'t>] {
        &self.vars
    }

    fn layer(&self, index: usize) -> (Var<'t>, Var<'t>) {
        (self.vars[2 * index], self.vars[2 * index + 1])
    }

    fn tape(&self) -> &'t Tape {
        self.vars[0].tape()
    }

    /// Queries `positions` (`[P, 3]`, NDC) at frame time `t`.
    pub fn query(&self, positions: Var<'t>, t: f64) -> Result<FieldVarsOut<'t>> {
        let cfg = &self.config;
        let tape = self.tape();
        let pl = cfg.pos_len();
        let enc_p = encode_var(positions, cfg.pos_freqs, true)?;
        let enc_t = tape.constant(Tensor::new(
            [1, cfg.input_len() - pl],
            positional_encode(&[cfg.normalize_time(t)], cfg.pos_freqs, true),
        )?);
        let mut h: Option<Var<'t>> = None;
        for i in 0..cfg.trunk_depth {
            let (w, b) = self.layer(i);
            let skip = cfg.has_skip() && Some(i) == cfg.skip_layer;
            let pre = if i == 0 || skip {
                // rows: [pos encoding | time encoding | hidden (skip only)]
                let wp = w.slice(0, 0, pl)?;
                let wt = w.slice(0, pl, cfg.input_len())?;
                let mut acc = enc_p.matmul(wp)?.add(enc_t.matmul(wt)?.add(b)?)?;
                if let Some(hv) = h.filter(|_| skip) {
                    let wh = w.slice(0, cfg.input_len(), cfg.input_len() + cfg.trunk_width)?;
                    acc = acc.add(hv.matmul(wh)?)?;
                }
                acc
            } else {
                h.expect("trunk has an input").matmul(w)?.add(b)?
            };
            h = Some(pre.relu());
        }
        let h = h.expect("trunk depth is positive");
        let d = cfg.trunk_depth;
        let (ws, bs) = self.layer(d);
        let (wp, bp) = self.layer(d + 1);
        let (wo, bo) = self.layer(d + 2);
        Ok(FieldVarsOut {
            sigma: h.matmul(ws)?.add(bs)?.softplus(),
            phi: h.matmul(wp)?.add(bp)?,
            omega: h.matmul(wo)?.add(bo)?,
        })
    }

    /// Colors for `omega` (`[R * N, E]`, N samples per ray). `dir_time` is
    /// the encoded `(d, t')` per ray, `[R, dir_len]`.
    pub fn color(
        &self,
        omega: Var<'t>,
        dir_time: Var<'t>,
        samples_per_ray: usize,
    ) -> Result<Var<'t>> {
        let cfg = &self.config;
        let e = cfg.embed_width;
        let first = cfg.trunk_depth + 3;
        let (w, b) = self.layer(first);
        let rows = omega.shape()[0];
        let rays = dir_time.shape()[0];
        if rays * samples_per_ray != rows {
            return Err(Error::ShapeMismatch {
                op: "color",
                lhs: omega.shape(),
                rhs: dir_time.shape(),
            });
        }
        let width = w.shape()[1];
        let we = w.slice(0, 0, e)?;
        let wd = w.slice(0, e, e + cfg.dir_len())?;
        let per_point = omega.matmul(we)?.reshape(&[rays, samples_per_ray, width])?;
        let per_ray = dir_time.matmul(wd)?.add(b)?.reshape(&[rays, 1, width])?;
        let pre = per_point.add(per_ray)?.reshape(&[rows, width])?;
        if cfg.color_layers == 0 {
            return Ok(pre.sigmoid());
        }
        let mut h = pre.relu();
        for i in 1..cfg.color_layers {
            let (w, b) = self.layer(first + i);
            h = h.matmul(w)?.add(b)?.relu();
        }
        let (w, b) = self.layer(first + cfg.color_layers);
        Ok(h.matmul(w)?.add(b)?.sigmoid())
    }

    /// Encodes per-ray `(d, t')` as a constant `[R, dir_len]`.
    pub fn dir_time_encoding(&self, dirs: &[Vec3], t_query: f64) -> Result<Var<'t>> {
        let tn = self.config.normalize_time(t_query);
        let mut raw = Vec::with_capacity(dirs.len() * 4);
        for d in dirs {
            raw.extend_from_slice(&[d[0], d[1], d[2], tn]);
        }
        let enc = encode_rows(
            &Tensor::new([dirs.len(), 4], raw)?,
            self.config.dir_freqs,
            true,
        );
        Ok(self.tape().constant(enc))
    }
}

/// Outputs of the field at one spacetime point.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldOutput {
    pub phi: TrajectoryCoeffs,
    pub omega: Vec<f64>,
    pub sigma: f64,
}

fn check_finite(what: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(String::from(what)))
    }
}

/// Evaluates the field at a single spacetime point.
pub fn query_field(params: &NetworkParams, p: Vec3, t: f64) -> Result<FieldOutput> {
    check_finite("query_field input", &[p[0], p[1], p[2], t])?;
    let tape = Tape::new();
    let f = params.bind_const(&tape);
    let pos = tape.constant(Tensor::new([1, 3], p.to_vec())?);
    let out = f.query(pos, t)?;
    let cfg = params.config();
    Ok(FieldOutput {
        phi: TrajectoryCoeffs::new(cfg.num_frames, cfg.num_coeffs, out.phi.value().into_data())?,
        omega: out.omega.value().into_data(),
        sigma: out.sigma.item(),
    })
}

/// RGB for embedding `omega` seen along unit direction `d` at time `t_query`.
pub fn query_color(
    params: &NetworkParams,
    omega: &[f64],
    t_query: f64,
    d: Vec3,
) -> Result<[f64; 3]> {
    check_finite("query_color input", omega)?;
    check_finite("query_color input", &[t_query, d[0], d[1], d[2]])?;
    let cfg = params.config();
    if omega.len() != cfg.embed_width {
        return Err(Error::invalid(format!(
            "embedding has {} entries, expected {}",
            omega.len(),
            cfg.embed_width
        )));
    }
    let tape = Tape::new();
    let f = params.bind_const(&tape);
    let om = tape.constant(Tensor::new([1, omega.len()], omega.to_vec())?);
    let dt = f.dir_time_encoding(&[d], t_query)?;
    let c = f.color(om, dt, 1)?.value();
    Ok([c.data()[0], c.data()[1], c.data()[2]])
}
