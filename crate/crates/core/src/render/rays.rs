use crate::math::Vec3;
use crate::scene::{CameraModel, ImageBuffer};

/// World-space rays with their pixel indices and optional target colors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RayBatch {
    pub origins: Vec<Vec3>,
    pub dirs: Vec<Vec3>,
    /// Row-major pixel index `v * width + u` in the source view.
    pub pixels: Vec<usize>,
    pub colors: Option<Vec<[f64; 3]>>,
}

impl RayBatch {
    pub fn len(&self) -> usize {
        self.origins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.origins.is_empty()
    }

    pub fn push(&mut self, o: Vec3, d: Vec3, pixel: usize) {
        self.origins.push(o);
        self.dirs.push(d);
        self.pixels.push(pixel);
    }
}

/// Rays through the centers of the given pixels (row-major indices).
pub fn generate_rays(cam: &CameraModel, pixels: &[usize]) -> RayBatch {
    let mut batch = RayBatch::default();
    for &p in pixels {
        let (o, d) = cam.pixel_ray(p % cam.width, p / cam.width);
        batch.push(o, d, p);
    }
    batch
}

/// Rays for every pixel of `cam`, in row-major order.
pub fn all_rays(cam: &CameraModel) -> RayBatch {
    let pixels: Vec<usize> = (0..cam.pixel_count()).collect();
    generate_rays(cam, &pixels)
}

/// Every pixel of a posed image, with its color attached.
pub fn image_rays(cam: &CameraModel, image: &ImageBuffer) -> RayBatch {
    let mut batch = all_rays(cam);
    batch.colors = Some((0..image.pixel_count()).map(|i| image.get(i % image.width, i / image.width)).collect());
    batch
}
