use super::{GeometryError, Vec3};

/// Pinhole camera. `rotation` maps camera axes to world axes (columns are the
/// camera x/right, y/down and z/forward directions); `center` is the optical
/// center in world coordinates. Pixel `(u, v)` is sampled at its center.
#[derive(Debug, Clone, PartialEq)]
pub struct PinholeCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    pub rotation: [[f64; 3]; 3],
    pub center: Vec3,
}

const ORTHONORMAL_TOL: f64 = 1e-9;

impl PinholeCamera {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: u32,
        height: u32,
        rotation: [[f64; 3]; 3],
        center: Vec3,
    ) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) {
            return Err(GeometryError::Focal(fx, fy));
        }
        let mut dev: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| rotation[k][i] * rotation[k][j]).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                dev = dev.max((dot - want).abs());
            }
        }
        if dev > ORTHONORMAL_TOL {
            return Err(GeometryError::Rotation(dev));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            center,
        })
    }

    /// Camera at `center` looking at `target`, square pixels, principal point
    /// at the image center, horizontal field of view `fov_x` in radians.
    pub fn look_at(
        center: Vec3,
        target: Vec3,
        up: Vec3,
        fov_x: f64,
        width: u32,
        height: u32,
    ) -> Result<Self, GeometryError> {
        let forward = (target - center)
            .normalized()
            .ok_or(GeometryError::DegenerateDirection)?;
        let right = forward
            .cross(up)
            .normalized()
            .ok_or(GeometryError::DegenerateUp)?;
        let down = forward.cross(right);
        let f = 0.5 * width as f64 / (0.5 * fov_x).tan();
        let rotation = [
            [right.x, down.x, forward.x],
            [right.y, down.y, forward.y],
            [right.z, down.z, forward.z],
        ];
        Self::new(
            f,
            f,
            0.5 * width as f64,
            0.5 * height as f64,
            width,
            height,
            rotation,
            center,
        )
    }

    fn to_world(&self, d: Vec3) -> Vec3 {
        let r = &self.rotation;
        Vec3::new(
            r[0][0] * d.x + r[0][1] * d.y + r[0][2] * d.z,
            r[1][0] * d.x + r[1][1] * d.y + r[1][2] * d.z,
            r[2][0] * d.x + r[2][1] * d.y + r[2][2] * d.z,
        )
    }

    /// Unit world-space direction through the center of pixel `(u, v)`.
    pub fn pixel_direction(&self, u: u32, v: u32) -> Result<Vec3, GeometryError> {
        if u >= self.width || v >= self.height {
            return Err(GeometryError::PixelOutside(u, v, self.width, self.height));
        }
        let d = Vec3::new(
            (u as f64 + 0.5 - self.cx) / self.fx,
            (v as f64 + 0.5 - self.cy) / self.fy,
            1.0,
        );
        self.to_world(d)
            .normalized()
            .ok_or(GeometryError::DegenerateDirection)
    }

    pub fn forward(&self) -> Vec3 {
        self.to_world(Vec3::new(0.0, 0.0, 1.0))
    }
}
