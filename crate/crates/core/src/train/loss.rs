use crate::error::{Error, Result};
use crate::fields::DensityGrid;
use crate::scene::ImageBuffer;

/// Mean over rays of the squared color error (channels summed).
pub fn loss_color(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    if pred.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!("{} predictions vs {} targets", pred.len(), gt.len())));
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| (0..3).map(|c| (p[c] - g[c]) * (p[c] - g[c])).sum::<f64>())
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Mean squared norm of projection offsets; zero for no offsets.
pub fn loss_uv(offsets: &[[f64; 2]]) -> f64 {
    if offsets.is_empty() {
        return 0.0;
    }
    offsets.iter().map(|o| o[0] * o[0] + o[1] * o[1]).sum::<f64>() / offsets.len() as f64
}

fn tv_pairs(res: [usize; 3]) -> usize {
    let [x, y, z] = res;
    (x - 1) * y * z + x * (y - 1) * z + x * y * (z - 1)
}

/// Mean squared raw difference over all axis-adjacent voxel pairs.
pub fn loss_tv(grid: &DensityGrid) -> f64 {
    loss_tv_values(grid.res, &grid.values)
}

/// [`loss_tv`] on a bare `x`-fastest value array; axes of size 1 contribute
/// no pairs.
pub fn loss_tv_values(res: [usize; 3], values: &[f64]) -> f64 {
    let pairs = tv_pairs(res);
    if pairs == 0 {
        return 0.0;
    }
    let mut sum = 0.0;
    visit_pairs(res, |a, b| {
        let d = values[b] - values[a];
        sum += d * d;
    });
    sum / pairs as f64
}

/// Adds `scale * d loss_tv / d raw` to `grad`.
pub fn loss_tv_backward(grid: &DensityGrid, scale: f64, grad: &mut [f64]) {
    let c = 2.0 * scale / tv_pairs(grid.res) as f64;
    visit_pairs(grid.res, |a, b| {
        let d = c * (grid.values[b] - grid.values[a]);
        grad[b] += d;
        grad[a] -= d;
    });
}

fn visit_pairs(res: [usize; 3], mut f: impl FnMut(usize, usize)) {
    let [nx, ny, nz] = res;
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let a = (k * ny + j) * nx + i;
                if i + 1 < nx {
                    f(a, a + 1);
                }
                if j + 1 < ny {
                    f(a, a + nx);
                }
                if k + 1 < nz {
                    f(a, a + nx * ny);
                }
            }
        }
    }
}

/// Reported PSNR for identical images.
pub const PSNR_CAP: f64 = 99.0;

/// `10 log10(1 / MSE)` over all pixels and channels, capped at [`PSNR_CAP`].
pub fn eval_psnr(rendered: &ImageBuffer, gt: &ImageBuffer) -> Result<f64> {
    if rendered.width != gt.width || rendered.height != gt.height {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} vs {}x{}",
            rendered.width, rendered.height, gt.width, gt.height
        )));
    }
    if rendered.data.is_empty() {
        return Err(Error::ShapeMismatch("empty images".into()));
    }
    let mse = rendered.data.iter().zip(&gt.data).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / rendered.data.len() as f64;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP)
}
