//! Geometric alignment: parametric warps, gradient-ascent registration on the
//! zero-mean normalized cross-correlation objective, and the shared
//! valid-region cropping rule applied before any pairwise scoring.
//!
//! Coordinates are (x, y) = (column, row). A [`GeoWarp`] maps input-image
//! coordinates to reference coordinates; resampling the input onto the
//! reference grid therefore goes through the inverse warp.

use serde::{Deserialize, Serialize};

use crate::buffer::ImageBuffer;
use crate::color::to_grayscale;
use crate::error::{Error, Result};
use crate::filter::{central_gradients, gaussian_smooth};

/// Axis-aligned crop window in row/column pixel units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub row0: usize,
    pub col0: usize,
    pub rows: usize,
    pub cols: usize,
}

/// Geometric motion families for registration, from 2 to 6 parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MotionModel {
    Translation,
    Euclidean,
    Affine,
}

impl MotionModel {
    pub fn param_count(&self) -> usize {
        match self {
            MotionModel::Translation => 2,
            MotionModel::Euclidean => 3,
            MotionModel::Affine => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MotionModel::Translation => "translation",
            MotionModel::Euclidean => "euclidean",
            MotionModel::Affine => "affine",
        }
    }
}

/// 2x3 affine warp taking input (x, y) to reference coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
#[derive(Serialize, Deserialize)]
#[serde(try_from = "WarpRepr", into = "WarpRepr")]
pub struct GeoWarp {
    p: [[f64; 3]; 2],
}

/// Row-major 6-number wire form of a warp.
#[derive(Serialize, Deserialize)]
struct WarpRepr {
    p: [f64; 6],
}

impl From<GeoWarp> for WarpRepr {
    fn from(w: GeoWarp) -> Self {
        WarpRepr { p: w.params() }
    }
}

impl TryFrom<WarpRepr> for GeoWarp {
    type Error = Error;
    fn try_from(r: WarpRepr) -> Result<Self> {
        GeoWarp::from_params(&r.p)
    }
}

impl GeoWarp {
    pub fn identity() -> Self {
        GeoWarp { p: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]] }
    }

    /// Pure shift by dx columns and dy rows.
    pub fn translation(dx: f64, dy: f64) -> Result<Self> {
        GeoWarp::from_matrix([[1.0, 0.0, dx], [0.0, 1.0, dy]])
    }

    /// Rotation by `theta` radians about the origin followed by a shift.
    pub fn euclidean(theta: f64, tx: f64, ty: f64) -> Result<Self> {
        let (s, c) = theta.sin_cos();
        GeoWarp::from_matrix([[c, -s, tx], [s, c, ty]])
    }

    pub fn from_matrix(p: [[f64; 3]; 2]) -> Result<Self> {
        if p.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("warp entries must be finite"));
        }
        let det = p[0][0] * p[1][1] - p[0][1] * p[1][0];
        if !det.is_finite() || det.abs() < f64::MIN_POSITIVE {
            return Err(Error::invalid("warp linear part is singular"));
        }
        Ok(GeoWarp { p })
    }

    pub fn from_params(p: &[f64; 6]) -> Result<Self> {
        GeoWarp::from_matrix([[p[0], p[1], p[2]], [p[3], p[4], p[5]]])
    }

    pub fn matrix(&self) -> [[f64; 3]; 2] {
        self.p
    }

    /// Row-major [p00, p01, p02, p10, p11, p12].
    pub fn params(&self) -> [f64; 6] {
        [self.p[0][0], self.p[0][1], self.p[0][2], self.p[1][0], self.p[1][1], self.p[1][2]]
    }

    pub fn apply_pt(&self, x: f64, y: f64) -> (f64, f64) {
        (
            self.p[0][0] * x + self.p[0][1] * y + self.p[0][2],
            self.p[1][0] * x + self.p[1][1] * y + self.p[1][2],
        )
    }

    pub fn invert(&self) -> Result<GeoWarp> {
        let det = self.p[0][0] * self.p[1][1] - self.p[0][1] * self.p[1][0];
        let l = [
            [self.p[1][1] / det, -self.p[0][1] / det],
            [-self.p[1][0] / det, self.p[0][0] / det],
        ];
        let tx = -(l[0][0] * self.p[0][2] + l[0][1] * self.p[1][2]);
        let ty = -(l[1][0] * self.p[0][2] + l[1][1] * self.p[1][2]);
        GeoWarp::from_matrix([[l[0][0], l[0][1], tx], [l[1][0], l[1][1], ty]])
    }

    /// Translation components (dx, dy).
    pub fn translation_part(&self) -> (f64, f64) {
        (self.p[0][2], self.p[1][2])
    }
}

/// Multi-scale behaviour of the registration solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PyramidMode {
    /// Three levels when max(H, W) > 512, otherwise single-scale.
    Auto,
    /// Single-scale.
    Off,
    /// Fixed level count (1 = single-scale); capped so the coarsest level
    /// keeps at least 32 px on each side.
    Levels(usize),
}

/// Tunable knobs of [`ecc_register_with`]; [`Default`] matches the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EccConfig {
    pub model: MotionModel,
    pub max_iters: usize,
    pub eps: f64,
    /// Gaussian sigma applied to the input before gradient evaluation only;
    /// the correlation objective always sees raw intensities.
    pub smooth_sigma: f64,
    pub pyramid: PyramidMode,
}

impl Default for EccConfig {
    fn default() -> Self {
        EccConfig {
            model: MotionModel::Affine,
            max_iters: 200,
            eps: 1e-6,
            smooth_sigma: 1.0,
            pyramid: PyramidMode::Auto,
        }
    }
}

/// Outcome of one registration: the recovered warp plus solver telemetry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EccResult {
    pub warp: GeoWarp,
    /// Zero-mean normalized cross-correlation of the warped input against
    /// the reference over the valid mask, for the returned warp.
    pub final_ecc: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Resamples each channel of `img` onto an `out_h` x `out_w` grid through the
/// inverse of `w`, with bilinear interpolation.
///
/// The mask is 1 where every tap that carries nonzero weight lands in-bounds
/// (an integer coordinate needs only its own pixel), 0 elsewhere with the
/// output pixel set to 0. The identity warp is a bit-exact copy.
pub fn warp_image(
    img: &ImageBuffer,
    w: &GeoWarp,
    out_h: usize,
    out_w: usize,
) -> Result<(ImageBuffer, ImageBuffer)> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("warp output size must be nonzero"));
    }
    let inv = w.invert()?;
    let ch = img.channels();
    let mut out = vec![0.0; out_h * out_w * ch];
    let mut mask = vec![0.0; out_h * out_w];
    let (h, wid) = (img.height(), img.width());
    let data = img.data();
    for r in 0..out_h {
        for c in 0..out_w {
            let (sx, sy) = inv.apply_pt(c as f64, r as f64);
            if let Some(taps) = bilinear_taps(sx, sy, h, wid) {
                mask[r * out_w + c] = 1.0;
                let base = (r * out_w + c) * ch;
                for (idx, weight) in taps.iter().flatten() {
                    for k in 0..ch {
                        out[base + k] += weight * data[idx * ch + k];
                    }
                }
            }
        }
    }
    Ok((
        ImageBuffer::from_computed(out_h, out_w, ch, out),
        ImageBuffer::from_computed(out_h, out_w, 1, mask),
    ))
}

/// Up to four (pixel index, weight) taps for sampling at (sx, sy), or None
/// when any nonzero-weight tap would fall outside the image.
#[inline]
fn bilinear_taps(sx: f64, sy: f64, h: usize, w: usize) -> Option<[Option<(usize, f64)>; 4]> {
    if !sx.is_finite() || !sy.is_finite() {
        return None;
    }
    let x0f = sx.floor();
    let y0f = sy.floor();
    let fx = sx - x0f;
    let fy = sy - y0f;
    let x0 = x0f as isize;
    let y0 = y0f as isize;
    let in_x = |x: isize| x >= 0 && (x as usize) < w;
    let in_y = |y: isize| y >= 0 && (y as usize) < h;

    let mut taps: [Option<(usize, f64)>; 4] = [None; 4];
    let mut slot = 0;
    let mut push = |x: isize, y: isize, weight: f64| -> bool {
        if weight == 0.0 {
            return true;
        }
        if !(in_x(x) && in_y(y)) {
            return false;
        }
        taps[slot] = Some((y as usize * w + x as usize, weight));
        slot += 1;
        true
    };
    let ok = push(x0, y0, (1.0 - fx) * (1.0 - fy))
        && push(x0 + 1, y0, fx * (1.0 - fy))
        && push(x0, y0 + 1, (1.0 - fx) * fy)
        && push(x0 + 1, y0 + 1, fx * fy);
    if ok {
        Some(taps)
    } else {
        None
    }
}

/// Plain zero-mean normalized cross-correlation between two images after
/// grayscale conversion, over the full frame.
///
/// Invariant under positive affine intensity rescaling of either side.
pub fn ecc_value(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    if a.height() != b.height() || a.width() != b.width() {
        return Err(Error::invalid("ecc_value requires matching dimensions"));
    }
    let ga = to_grayscale(a);
    let gb = to_grayscale(b);
    zncc_full(ga.data(), gb.data())
}

fn zncc_full(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut corr, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        corr += dx * dy;
        na += dx * dx;
        nb += dy * dy;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateInput(
            "correlation is undefined on a zero-variance image".into(),
        ));
    }
    Ok(corr / (na.sqrt() * nb.sqrt()))
}

/// Registers `input` against `reference` with library defaults for the
/// remaining knobs; see [`ecc_register_with`].
pub fn ecc_register(
    input: &ImageBuffer,
    reference: &ImageBuffer,
    model: MotionModel,
    max_iters: usize,
    eps: f64,
) -> Result<EccResult> {
    ecc_register_with(
        input,
        reference,
        &EccConfig { model, max_iters, eps, ..EccConfig::default() },
    )
}

/// Estimates the warp aligning `input` to `reference` by iterative
/// forward-additive ascent on the zero-mean correlation objective.
///
/// The returned warp maps input coordinates to reference coordinates, so
/// `warp_image(input, &result.warp, ...)` produces the aligned image. The
/// result is never worse than leaving the pair untouched: if the iteration
/// degrades the objective, the best warp seen (including the identity,
/// evaluated at full resolution) is returned with `converged = false` when
/// the increment test was not met.
pub fn ecc_register_with(
    input: &ImageBuffer,
    reference: &ImageBuffer,
    config: &EccConfig,
) -> Result<EccResult> {
    if input.height() != reference.height() || input.width() != reference.width() {
        return Err(Error::invalid("registration requires matching dimensions"));
    }
    if config.max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if !(config.eps > 0.0) || !config.eps.is_finite() {
        return Err(Error::invalid("eps must be a positive finite number"));
    }
    if !config.smooth_sigma.is_finite() || config.smooth_sigma < 0.0 {
        return Err(Error::invalid("smooth_sigma must be finite and non-negative"));
    }

    let gray_in = to_grayscale(input);
    let gray_ref = to_grayscale(reference);
    // Zero variance anywhere makes the objective undefined.
    let identity_ecc = zncc_full(gray_in.data(), gray_ref.data())?;

    let levels = pyramid_levels(config.pyramid, input.height(), input.width())?;
    let mut pyr_in = vec![gray_in];
    let mut pyr_ref = vec![gray_ref];
    for _ in 1..levels {
        pyr_in.push(box_downsample(pyr_in.last().unwrap())?);
        pyr_ref.push(box_downsample(pyr_ref.last().unwrap())?);
    }

    // q maps reference coordinates to input coordinates (the sampling warp);
    // the public warp is its inverse.
    let mut q = GeoParams::identity(config.model);
    let mut iterations = 0;
    let mut converged = false;
    let mut best = (q, f64::NEG_INFINITY);
    for level in (0..pyr_in.len()).rev() {
        if level < pyr_in.len() - 1 {
            q.scale_translation(2.0);
        }
        let out = ecc_single_scale(&pyr_in[level], &pyr_ref[level], q, config)?;
        q = out.q;
        iterations += out.iterations;
        converged = out.converged;
        if level == 0 {
            best = (out.best_q, out.best_ecc);
        }
    }

    // The coarse-to-fine start is not the identity, so the identity baseline
    // is re-checked at full resolution; ties keep the simpler warp.
    let (final_q, final_ecc) = if identity_ecc >= best.1 {
        (GeoParams::identity(config.model), identity_ecc)
    } else {
        best
    };
    Ok(EccResult {
        warp: final_q.to_warp()?.invert()?,
        final_ecc,
        iterations,
        converged,
    })
}

fn pyramid_levels(mode: PyramidMode, h: usize, w: usize) -> Result<usize> {
    let requested = match mode {
        PyramidMode::Off => 1,
        PyramidMode::Auto => {
            if h.max(w) > 512 {
                3
            } else {
                1
            }
        }
        PyramidMode::Levels(0) => {
            return Err(Error::invalid("pyramid level count must be at least 1"))
        }
        PyramidMode::Levels(n) => n,
    };
    // Cap so the coarsest level keeps at least 32 px on each side.
    let mut usable = 1;
    let (mut ch, mut cw) = (h, w);
    while usable < requested && ch / 2 >= 32 && cw / 2 >= 32 {
        ch /= 2;
        cw /= 2;
        usable += 1;
    }
    Ok(usable)
}

/// 2x2 box-mean downsample; odd trailing rows/columns are dropped.
pub(crate) fn box_downsample(img: &ImageBuffer) -> Result<ImageBuffer> {
    let (h, w, ch) = (img.height() / 2, img.width() / 2, img.channels());
    if h == 0 || w == 0 {
        return Err(Error::invalid("image too small to downsample"));
    }
    let src = img.data();
    let sw = img.width();
    let mut out = vec![0.0; h * w * ch];
    for r in 0..h {
        for c in 0..w {
            for k in 0..ch {
                let i00 = ((2 * r) * sw + 2 * c) * ch + k;
                let i01 = ((2 * r) * sw + 2 * c + 1) * ch + k;
                let i10 = ((2 * r + 1) * sw + 2 * c) * ch + k;
                let i11 = ((2 * r + 1) * sw + 2 * c + 1) * ch + k;
                out[(r * w + c) * ch + k] = (src[i00] + src[i01] + src[i10] + src[i11]) * 0.25;
            }
        }
    }
    Ok(ImageBuffer::from_computed(h, w, ch, out))
}

/// Model-specific parameter vector for the sampling warp q.
#[derive(Debug, Clone, Copy)]
enum GeoParams {
    Translation { tx: f64, ty: f64 },
    Euclidean { theta: f64, tx: f64, ty: f64 },
    Affine { p: [f64; 6] },
}

impl GeoParams {
    fn identity(model: MotionModel) -> Self {
        match model {
            MotionModel::Translation => GeoParams::Translation { tx: 0.0, ty: 0.0 },
            MotionModel::Euclidean => GeoParams::Euclidean { theta: 0.0, tx: 0.0, ty: 0.0 },
            MotionModel::Affine => GeoParams::Affine { p: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0] },
        }
    }

    fn scale_translation(&mut self, s: f64) {
        match self {
            GeoParams::Translation { tx, ty } | GeoParams::Euclidean { tx, ty, .. } => {
                *tx *= s;
                *ty *= s;
            }
            GeoParams::Affine { p } => {
                p[2] *= s;
                p[5] *= s;
            }
        }
    }

    fn to_warp(self) -> Result<GeoWarp> {
        match self {
            GeoParams::Translation { tx, ty } => GeoWarp::translation(tx, ty),
            GeoParams::Euclidean { theta, tx, ty } => GeoWarp::euclidean(theta, tx, ty),
            GeoParams::Affine { p } => GeoWarp::from_params(&p),
        }
    }

    fn param_count(&self) -> usize {
        match self {
            GeoParams::Translation { .. } => 2,
            GeoParams::Euclidean { .. } => 3,
            GeoParams::Affine { .. } => 6,
        }
    }

    /// Jacobian row of the warped-intensity value at reference pixel (x, y)
    /// with warped gradients (gx, gy), written into `row`.
    fn jacobian_row(&self, x: f64, y: f64, gx: f64, gy: f64, row: &mut [f64]) {
        match self {
            GeoParams::Translation { .. } => {
                row[0] = gx;
                row[1] = gy;
            }
            GeoParams::Euclidean { theta, .. } => {
                let (s, c) = theta.sin_cos();
                row[0] = gx * (-s * x - c * y) + gy * (c * x - s * y);
                row[1] = gx;
                row[2] = gy;
            }
            GeoParams::Affine { .. } => {
                row[0] = gx * x;
                row[1] = gx * y;
                row[2] = gx;
                row[3] = gy * x;
                row[4] = gy * y;
                row[5] = gy;
            }
        }
    }

    fn step(&mut self, delta: &[f64]) {
        match self {
            GeoParams::Translation { tx, ty } => {
                *tx += delta[0];
                *ty += delta[1];
            }
            GeoParams::Euclidean { theta, tx, ty } => {
                *theta += delta[0];
                *tx += delta[1];
                *ty += delta[2];
            }
            GeoParams::Affine { p } => {
                for (v, d) in p.iter_mut().zip(delta) {
                    *v += d;
                }
            }
        }
    }

    fn is_valid(&self) -> bool {
        match self {
            GeoParams::Translation { tx, ty } => tx.is_finite() && ty.is_finite(),
            GeoParams::Euclidean { theta, tx, ty } => {
                theta.is_finite() && tx.is_finite() && ty.is_finite()
            }
            GeoParams::Affine { p } => {
                p.iter().all(|v| v.is_finite())
                    && (p[0] * p[4] - p[1] * p[3]).abs() >= 1e-12
            }
        }
    }
}

struct ScaleOutcome {
    q: GeoParams,
    best_q: GeoParams,
    best_ecc: f64,
    iterations: usize,
    converged: bool,
}

/// One pyramid level of forward-additive ascent, starting from `q0`.
fn ecc_single_scale(
    gray_in: &ImageBuffer,
    gray_ref: &ImageBuffer,
    q0: GeoParams,
    config: &EccConfig,
) -> Result<ScaleOutcome> {
    let (h, w) = (gray_ref.height(), gray_ref.width());
    let n_px = h * w;
    let t = gray_ref.data();
    let smoothed = gaussian_smooth(gray_in, config.smooth_sigma);
    let (gx_img, gy_img) = central_gradients(&smoothed)?;
    let (gx, gy) = (gx_img.data(), gy_img.data());
    let raw = gray_in.data();
    let (sh, sw) = (gray_in.height(), gray_in.width());

    let np = q0.param_count();
    let mut q = q0;
    let mut best_q = q0;
    let mut best_ecc = f64::NEG_INFINITY;
    let mut rho_prev = f64::NEG_INFINITY;
    let mut iterations = 0;
    let mut converged = false;

    let mut iw = vec![0.0; n_px];
    let mut gxw = vec![0.0; n_px];
    let mut gyw = vec![0.0; n_px];
    let mut mask = vec![false; n_px];
    let mut row = [0.0; 6];

    for _ in 0..config.max_iters {
        iterations += 1;
        let warp = q.to_warp();
        let sampler = match warp {
            Ok(w) => w,
            Err(_) => break,
        };

        // Warp the raw input and both gradient planes onto the reference
        // grid; all three share the in-bounds mask.
        let mut count = 0usize;
        let (mut sum_t, mut sum_iw) = (0.0, 0.0);
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let (sx, sy) = sampler.apply_pt(c as f64, r as f64);
                match bilinear_taps(sx, sy, sh, sw) {
                    Some(taps) => {
                        let (mut vi, mut vx, mut vy) = (0.0, 0.0, 0.0);
                        for (idx, weight) in taps.iter().flatten() {
                            vi += weight * raw[*idx];
                            vx += weight * gx[*idx];
                            vy += weight * gy[*idx];
                        }
                        iw[i] = vi;
                        gxw[i] = vx;
                        gyw[i] = vy;
                        mask[i] = true;
                        count += 1;
                        sum_t += t[i];
                        sum_iw += vi;
                    }
                    None => mask[i] = false,
                }
            }
        }
        if count < np + 2 {
            break;
        }
        let mean_t = sum_t / count as f64;
        let mean_iw = sum_iw / count as f64;

        // Masked zero-mean correlation of the raw planes.
        let (mut corr, mut nt2, mut ni2) = (0.0, 0.0, 0.0);
        for i in 0..n_px {
            if mask[i] {
                let dt = t[i] - mean_t;
                let di = iw[i] - mean_iw;
                corr += dt * di;
                nt2 += dt * dt;
                ni2 += di * di;
            }
        }
        if nt2 == 0.0 || ni2 == 0.0 {
            break;
        }
        let rho = corr / (nt2.sqrt() * ni2.sqrt());
        if rho > best_ecc {
            best_ecc = rho;
            best_q = q;
        }
        if (rho - rho_prev).abs() < config.eps {
            converged = true;
            break;
        }
        rho_prev = rho;

        // Normal matrix H = G'G and the projections of the zero-mean
        // template/input vectors onto the Jacobian columns.
        let mut hess = nalgebra::DMatrix::<f64>::zeros(np, np);
        let mut gt_t = nalgebra::DVector::<f64>::zeros(np);
        let mut gt_iw = nalgebra::DVector::<f64>::zeros(np);
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                if !mask[i] {
                    continue;
                }
                q.jacobian_row(c as f64, r as f64, gxw[i], gyw[i], &mut row);
                let dt = t[i] - mean_t;
                let di = iw[i] - mean_iw;
                for a in 0..np {
                    gt_t[a] += row[a] * dt;
                    gt_iw[a] += row[a] * di;
                    for b in a..np {
                        hess[(a, b)] += row[a] * row[b];
                    }
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        let chol = match nalgebra::Cholesky::new(hess) {
            Some(c) => c,
            None => break,
        };
        let h_inv_gt_iw = chol.solve(&gt_iw);
        let lambda_num = ni2 - gt_iw.dot(&h_inv_gt_iw);
        let lambda_den = corr - gt_t.dot(&h_inv_gt_iw);
        if lambda_den <= 0.0 {
            // The local quadratic model cannot increase the correlation.
            break;
        }
        let lambda = lambda_num / lambda_den;
        let rhs = &gt_t * lambda - &gt_iw;
        let delta = chol.solve(&rhs);
        q.step(delta.as_slice());
        if !q.is_valid() {
            break;
        }
    }

    Ok(ScaleOutcome { q, best_q, best_ecc, iterations, converged })
}

/// Tightest rectangle where every mask is set, shrunk by `margin` per side.
pub fn shared_valid_crop(masks: &[ImageBuffer], margin: usize) -> Result<CropRect> {
    let first = masks.first().ok_or_else(|| Error::invalid("no masks given"))?;
    let (h, w) = (first.height(), first.width());
    for m in masks {
        if m.channels() != 1 {
            return Err(Error::invalid("masks must be single-channel"));
        }
        if m.height() != h || m.width() != w {
            return Err(Error::invalid("masks must share dimensions"));
        }
    }
    let (mut r0, mut c0, mut r1, mut c1) = (h, w, 0usize, 0usize);
    let mut any = false;
    for r in 0..h {
        for c in 0..w {
            if masks.iter().all(|m| m.sample(r, c, 0) > 0.5) {
                any = true;
                r0 = r0.min(r);
                c0 = c0.min(c);
                r1 = r1.max(r);
                c1 = c1.max(c);
            }
        }
    }
    if !any {
        return Err(Error::EmptyRegion("mask intersection is empty".into()));
    }
    let row0 = r0 + margin;
    let col0 = c0 + margin;
    if r1 < row0 + margin || c1 < col0 + margin {
        return Err(Error::EmptyRegion(format!(
            "margin {margin} leaves no pixels inside the valid box"
        )));
    }
    Ok(CropRect {
        row0,
        col0,
        rows: r1 - margin - row0 + 1,
        cols: c1 - margin - col0 + 1,
    })
}

/// A registered, cropped pair ready for scoring.
#[derive(Debug, Clone)]
pub struct RegisteredPair {
    pub low: ImageBuffer,
    pub gt: ImageBuffer,
    pub result: EccResult,
    pub crop: CropRect,
}

/// Aligns `low` to `gt`, then crops both to the shared valid region.
pub fn register_pair(low: &ImageBuffer, gt: &ImageBuffer, margin: usize) -> Result<RegisteredPair> {
    register_pair_with(low, gt, margin, &EccConfig::default())
}

/// [`register_pair`] with explicit solver configuration.
pub fn register_pair_with(
    low: &ImageBuffer,
    gt: &ImageBuffer,
    margin: usize,
    config: &EccConfig,
) -> Result<RegisteredPair> {
    if low.height() != gt.height() || low.width() != gt.width() {
        return Err(Error::invalid("register_pair requires matching dimensions"));
    }
    let result = ecc_register_with(low, gt, config)?;
    let (warped, mask) = warp_image(low, &result.warp, gt.height(), gt.width())?;
    let gt_mask = ImageBuffer::filled(gt.height(), gt.width(), 1, 1.0)?;
    let crop = shared_valid_crop(&[mask, gt_mask], margin)?;
    Ok(RegisteredPair {
        low: warped.crop(&crop)?,
        gt: gt.crop(&crop)?,
        result,
        crop,
    })
}
