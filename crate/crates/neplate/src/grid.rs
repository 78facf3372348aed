//! Rectangular domains, 2d meshes and the thin 3d plate grid.

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Axis-aligned rectangle `[x0, x1] × [y0, y1]` in the plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect<T> {
    pub x0: T,
    pub x1: T,
    pub y0: T,
    pub y1: T,
}

impl<T: Real> Rect<T> {
    pub fn new(x0: T, x1: T, y0: T, y1: T) -> Self {
        assert!(x1 > x0 && y1 > y0, "rectangle must have positive extent");
        Self { x0, x1, y0, y1 }
    }

    /// Unit square `[0,1]²`.
    pub fn unit() -> Self {
        Self::new(T::zero(), T::one(), T::zero(), T::one())
    }

    pub fn width(&self) -> T {
        self.x1 - self.x0
    }

    pub fn height(&self) -> T {
        self.y1 - self.y0
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    pub fn contains(&self, x1: T, x2: T) -> bool {
        x1 >= self.x0 && x1 <= self.x1 && x2 >= self.y0 && x2 <= self.y1
    }
}

/// Uniform 2d node mesh over a rectangle; `nx × ny` nodes, x-index fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mesh2<T> {
    pub rect: Rect<T>,
    pub nx: usize,
    pub ny: usize,
}

impl<T: Real> Mesh2<T> {
    pub fn new(rect: Rect<T>, nx: usize, ny: usize) -> Self {
        assert!(nx >= 2 && ny >= 2, "mesh needs at least 2 nodes per axis");
        Self { rect, nx, ny }
    }

    pub fn dx(&self) -> T {
        self.rect.width() / real::<T>((self.nx - 1) as f64)
    }

    pub fn dy(&self) -> T {
        self.rect.height() / real::<T>((self.ny - 1) as f64)
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_cells(&self) -> usize {
        (self.nx - 1) * (self.ny - 1)
    }

    /// Cell area `dx · dy`.
    pub fn cell_area(&self) -> T {
        self.dx() * self.dy()
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny);
        j * self.nx + i
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.nx - 1 && j < self.ny - 1);
        j * (self.nx - 1) + i
    }

    pub fn node_pos(&self, i: usize, j: usize) -> (T, T) {
        (
            self.rect.x0 + real::<T>(i as f64) * self.dx(),
            self.rect.y0 + real::<T>(j as f64) * self.dy(),
        )
    }

    /// Center of cell `(i, j)`.
    pub fn cell_center(&self, i: usize, j: usize) -> (T, T) {
        (
            self.rect.x0 + (real::<T>(i as f64) + real::<T>(0.5)) * self.dx(),
            self.rect.y0 + (real::<T>(j as f64) + real::<T>(0.5)) * self.dy(),
        )
    }
}

/// Structured grid on the plate `Ω × (−h/2, h/2)`.
///
/// `nz` is odd so the midplane `x₃ = 0` is a node layer. The node layout is
/// x-fastest, then y, then z.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid3<T> {
    pub mesh: Mesh2<T>,
    pub nz: usize,
    pub h: T,
}

impl<T: Real> Grid3<T> {
    pub fn new(mesh: Mesh2<T>, nz: usize, h: T) -> Result<Self> {
        if nz < 3 || nz % 2 == 0 {
            return Err(Error::MeshMismatch(format!(
                "nz must be odd and >= 3, got {nz}"
            )));
        }
        if h <= T::zero() {
            return Err(Error::MeshMismatch("thickness h must be positive".into()));
        }
        Ok(Self { mesh, nz, h })
    }

    pub fn dz(&self) -> T {
        self.h / real::<T>((self.nz - 1) as f64)
    }

    /// Whether the through-thickness spacing resolves at least as finely as
    /// the in-plane spacings. Coarse-but-valid configurations (large h on a
    /// fine sweep grid) may report `false`; callers decide whether to warn.
    pub fn thin_direction_resolved(&self) -> bool {
        self.dz() <= self.mesh.dx().min(self.mesh.dy())
    }

    pub fn n_nodes(&self) -> usize {
        self.mesh.n_nodes() * self.nz
    }

    pub fn n_cells(&self) -> usize {
        self.mesh.n_cells() * (self.nz - 1)
    }

    #[inline]
    pub fn node_index(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.mesh.nx && j < self.mesh.ny && k < self.nz);
        (k * self.mesh.ny + j) * self.mesh.nx + i
    }

    #[inline]
    pub fn cell_index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * (self.mesh.ny - 1) + j) * (self.mesh.nx - 1) + i
    }

    /// x₃ coordinate of node layer `k`, exact zero at the midplane layer.
    pub fn x3(&self, k: usize) -> T {
        let mid = (self.nz - 1) / 2;
        let offset = k as i64 - mid as i64;
        real::<T>(offset as f64) * self.dz()
    }

    pub fn node_pos(&self, i: usize, j: usize, k: usize) -> (T, T, T) {
        let (x1, x2) = self.mesh.node_pos(i, j);
        (x1, x2, self.x3(k))
    }

    /// Cell volume `dx · dy · dz`.
    pub fn cell_volume(&self) -> T {
        self.mesh.cell_area() * self.dz()
    }

    /// Diameter of the 3d plate domain.
    pub fn diameter(&self) -> T {
        let w = self.mesh.rect.width();
        let hgt = self.mesh.rect.height();
        (w * w + hgt * hgt + self.h * self.h).sqrt()
    }

    /// Volume of the 3d plate domain `|Ω| · h`.
    pub fn volume(&self) -> T {
        self.mesh.rect.area() * self.h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid3_rejects_even_or_tiny_nz() {
        let mesh = Mesh2::new(Rect::<f64>::unit(), 4, 4);
        assert!(Grid3::new(mesh, 4, 0.1).is_err());
        assert!(Grid3::new(mesh, 1, 0.1).is_err());
        assert!(Grid3::new(mesh, 3, 0.1).is_ok());
    }

    #[test]
    fn midplane_layer_is_exactly_zero() {
        let mesh = Mesh2::new(Rect::<f64>::unit(), 4, 4);
        let grid = Grid3::new(mesh, 7, 0.3).unwrap();
        assert_eq!(grid.x3(3), 0.0);
        assert!((grid.x3(0) + 0.15).abs() < 1e-15);
        assert!((grid.x3(6) - 0.15).abs() < 1e-15);
    }

    #[test]
    fn cell_counts_match() {
        let mesh = Mesh2::new(Rect::<f64>::unit(), 5, 4);
        let grid = Grid3::new(mesh, 3, 0.1).unwrap();
        assert_eq!(grid.n_cells(), 4 * 3 * 2);
        assert_eq!(grid.n_nodes(), 5 * 4 * 3);
    }
}
