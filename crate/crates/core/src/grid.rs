//! Periodic boxes and their wavenumber lattices.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// A periodic box discretised with `n[axis]` points per axis.
///
/// Storage order everywhere in the crate is row-major with `x1` outermost, so
/// the last axis is contiguous. Per axis the FFT index order is
/// `0, 1, .., n/2 - 1, -n/2, .., -1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxGrid {
    dim: usize,
    n: [usize; 3],
    length: [f64; 3],
}

/// A lattice point: its signed integer index and physical wavevector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wavevector {
    pub index: [i64; 3],
    pub xi: [f64; 3],
}

impl Wavevector {
    pub fn norm_sq(&self) -> f64 {
        self.xi.iter().map(|x| x * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn horizontal(&self) -> [f64; 2] {
        [self.xi[0], self.xi[1]]
    }
}

type GridKey = (usize, [usize; 3], [u64; 3]);

fn cached<T: ?Sized>(
    cache: &OnceLock<Mutex<HashMap<GridKey, Arc<T>>>>,
    grid: &BoxGrid,
    build: impl FnOnce(&BoxGrid) -> Arc<T>,
) -> Arc<T> {
    let key = (grid.dim, grid.n, grid.length.map(f64::to_bits));
    let cache = cache.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(t) = cache.lock().expect("grid table cache").get(&key) {
        return t.clone();
    }
    let table = build(grid);
    let mut map = cache.lock().expect("grid table cache");
    if map.len() > 32 {
        map.clear();
    }
    map.entry(key).or_insert(table).clone()
}

impl BoxGrid {
    pub fn new(points: &[usize], lengths: &[f64]) -> Result<Self> {
        let dim = points.len();
        if !(dim == 2 || dim == 3) || lengths.len() != dim {
            return Err(Error::InvalidGrid(format!(
                "dimension must be 2 or 3 with one length per axis, got {} points and {} lengths",
                dim,
                lengths.len()
            )));
        }
        let mut n = [1usize; 3];
        let mut length = [1.0f64; 3];
        for axis in 0..dim {
            if points[axis] == 0 || points[axis] % 2 != 0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {} needs a positive even point count, got {}",
                    axis, points[axis]
                )));
            }
            if !(lengths[axis] > 0.0) || !lengths[axis].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "axis {} needs a positive box length, got {}",
                    axis, lengths[axis]
                )));
            }
            n[axis] = points[axis];
            length[axis] = lengths[axis];
        }
        Ok(BoxGrid { dim, n, length })
    }

    /// Square 2D box with `n` points and side `l`.
    pub fn square(n: usize, l: f64) -> Result<Self> {
        Self::new(&[n, n], &[l, l])
    }

    /// Cubic 3D box with `n` points and side `l`.
    pub fn cube(n: usize, l: f64) -> Result<Self> {
        Self::new(&[n, n, n], &[l, l, l])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> &[usize] {
        &self.n[..self.dim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.length[..self.dim]
    }

    pub fn n(&self, axis: usize) -> usize {
        self.n[axis]
    }

    pub fn length(&self, axis: usize) -> f64 {
        self.length[axis]
    }

    /// Total number of lattice points.
    pub fn len(&self) -> usize {
        self.points().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.length[axis] / self.n[axis] as f64
    }

    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    /// Scale factor 2π/L of the given axis.
    pub fn dk(&self, axis: usize) -> f64 {
        2.0 * PI / self.length[axis]
    }

    /// Signed wavenumber index for FFT position `i` on `axis`.
    pub fn signed(&self, axis: usize, i: usize) -> i64 {
        let n = self.n[axis];
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    /// FFT position of a signed index (wrapped periodically).
    pub fn position(&self, axis: usize, k: i64) -> usize {
        let n = self.n[axis] as i64;
        k.rem_euclid(n) as usize
    }

    /// Per-axis positions of a flat index.
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let mut out = [0usize; 3];
        let mut rem = flat;
        for axis in (0..self.dim).rev() {
            out[axis] = rem % self.n[axis];
            rem /= self.n[axis];
        }
        out
    }

    pub fn flatten(&self, pos: [usize; 3]) -> usize {
        let mut flat = 0;
        for (axis, p) in pos.iter().enumerate().take(self.dim) {
            flat = flat * self.n[axis] + p;
        }
        flat
    }

    pub fn wavevector(&self, flat: usize) -> Wavevector {
        let pos = self.unflatten(flat);
        let mut index = [0i64; 3];
        let mut xi = [0.0f64; 3];
        for axis in 0..self.dim {
            index[axis] = self.signed(axis, pos[axis]);
            xi[axis] = index[axis] as f64 * self.dk(axis);
        }
        Wavevector { index, xi }
    }

    /// All wavevectors in storage order, cached per grid.
    pub fn wavevectors(&self) -> Arc<[Wavevector]> {
        static CACHE: OnceLock<Mutex<HashMap<GridKey, Arc<[Wavevector]>>>> = OnceLock::new();
        cached(&CACHE, self, |g| (0..g.len()).map(|f| g.wavevector(f)).collect())
    }

    /// `conjugate(flat)` for every flat index, cached per grid.
    pub fn conjugates(&self) -> Arc<[usize]> {
        static CACHE: OnceLock<Mutex<HashMap<GridKey, Arc<[usize]>>>> = OnceLock::new();
        cached(&CACHE, self, |g| (0..g.len()).map(|f| g.conjugate(f)).collect())
    }

    /// Flat index of the wavevector `-k`.
    pub fn conjugate(&self, flat: usize) -> usize {
        let pos = self.unflatten(flat);
        let mut neg = [0usize; 3];
        for axis in 0..self.dim {
            neg[axis] = (self.n[axis] - pos[axis]) % self.n[axis];
        }
        self.flatten(neg)
    }

    /// True when some axis sits on the unpaired index `-n/2`.
    pub fn is_nyquist(&self, flat: usize) -> bool {
        let pos = self.unflatten(flat);
        (0..self.dim).any(|a| pos[a] == self.n[a] / 2)
    }

    /// Physical coordinate of grid point `flat`.
    pub fn coordinate(&self, flat: usize) -> [f64; 3] {
        let pos = self.unflatten(flat);
        let mut x = [0.0; 3];
        for axis in 0..self.dim {
            x[axis] = pos[axis] as f64 * self.spacing(axis);
        }
        x
    }

    /// Largest resolvable wavevector magnitude.
    pub fn max_wavenumber(&self) -> f64 {
        (0..self.dim)
            .map(|a| {
                let k = (self.n[a] / 2) as f64 * self.dk(a);
                k * k
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Smallest nonzero wavevector magnitude.
    pub fn min_wavenumber(&self) -> f64 {
        (0..self.dim).map(|a| self.dk(a)).fold(f64::INFINITY, f64::min)
    }

    /// Same box with every point count scaled by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        let mut g = *self;
        for axis in 0..self.dim {
            g.n[axis] *= factor;
        }
        g
    }

    /// The horizontal (x1, x2) slice of a 3D grid.
    pub fn horizontal(&self) -> Result<Self> {
        if self.dim != 3 {
            return Err(Error::InvalidGrid("horizontal slice needs a 3D grid".into()));
        }
        Self::new(&self.n[..2], &self.length[..2])
    }
}
