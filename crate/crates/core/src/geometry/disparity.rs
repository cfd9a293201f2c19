use super::{GeometryError, MIN_VALID_DISPARITY};

/// Per-pixel disparity of the left image, row-major, with an explicit
/// validity mask. Masked pixels store `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: u32,
    height: u32,
    values: Vec<f32>,
    valid: Vec<bool>,
}

impl DisparityMap {
    /// All pixels masked.
    pub fn invalid(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            values: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    /// Builds a map from raw values; anything non-finite or not above
    /// [`MIN_VALID_DISPARITY`] is masked.
    pub fn from_values(width: u32, height: u32, values: Vec<f32>) -> Result<Self, GeometryError> {
        let n = width as usize * height as usize;
        if values.len() != n {
            return Err(GeometryError::ShapeMismatch {
                expected: (width, height),
                actual: (values.len() as u32, 1),
            });
        }
        let mut map = Self::invalid(width, height);
        for (i, d) in values.into_iter().enumerate() {
            map.set_index(i, d);
        }
        Ok(map)
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Option<f32>) -> Self {
        let mut map = Self::invalid(width, height);
        for v in 0..height {
            for u in 0..width {
                if let Some(d) = f(u, v) {
                    map.set(u, v, d);
                }
            }
        }
        map
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    #[inline]
    fn index(&self, u: u32, v: u32) -> usize {
        v as usize * self.width as usize + u as usize
    }

    /// Disparity at `(u, v)` if the pixel is valid.
    #[inline]
    pub fn get(&self, u: u32, v: u32) -> Option<f32> {
        let i = self.index(u, v);
        self.valid[i].then(|| self.values[i])
    }

    pub fn set(&mut self, u: u32, v: u32, d: f32) {
        let i = self.index(u, v);
        self.set_index(i, d);
    }

    fn set_index(&mut self, i: usize, d: f32) {
        if d.is_finite() && d as f64 > MIN_VALID_DISPARITY {
            self.values[i] = d;
            self.valid[i] = true;
        } else {
            self.values[i] = 0.0;
            self.valid[i] = false;
        }
    }

    pub fn invalidate(&mut self, u: u32, v: u32) {
        let i = self.index(u, v);
        self.values[i] = 0.0;
        self.valid[i] = false;
    }

    pub fn is_valid(&self, u: u32, v: u32) -> bool {
        self.valid[self.index(u, v)]
    }

    /// Raw row-major values; masked pixels are zero.
    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Iterates `(u, v, d)` over valid pixels in row-major order.
    pub fn iter_valid(&self) -> impl Iterator<Item = (u32, u32, f32)> + '_ {
        let w = self.width as usize;
        self.valid
            .iter()
            .zip(&self.values)
            .enumerate()
            .filter(|(_, (ok, _))| **ok)
            .map(move |(i, (_, &d))| ((i % w) as u32, (i / w) as u32, d))
    }

    pub fn max_value(&self) -> Option<f32> {
        self.iter_valid().map(|(_, _, d)| d).reduce(f32::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn masking_rules() {
        let map = DisparityMap::from_values(3, 1, vec![0.0, f32::NAN, 2.5]).unwrap();
        assert_eq!(map.get(0, 0), None);
        assert_eq!(map.get(1, 0), None);
        assert_eq!(map.get(2, 0), Some(2.5));
        assert_eq!(map.valid_count(), 1);
        assert_eq!(map.values(), &[0.0, 0.0, 2.5]);
        assert!(DisparityMap::from_values(3, 2, vec![1.0; 5]).is_err());
    }

    #[test]
    fn iter_valid_reports_coordinates() {
        let map = DisparityMap::from_fn(4, 3, |u, v| (u == v).then_some(1.0 + u as f32));
        let got: Vec<_> = map.iter_valid().collect();
        assert_eq!(got, vec![(0, 0, 1.0), (1, 1, 2.0), (2, 2, 3.0)]);
        assert_eq!(map.max_value(), Some(3.0));
    }
}
