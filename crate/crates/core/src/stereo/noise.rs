/// Seeded 3D value noise, summed over octaves, in `[0, 1]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ValueNoise {
    seed: u64,
}

impl ValueNoise {
    pub(crate) fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn lattice(&self, x: i64, y: i64, z: i64) -> f64 {
        let mut h = self.seed
            ^ (x as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
            ^ (y as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
            ^ (z as u64).wrapping_mul(0x1656_67B1_9E37_79F9);
        // splitmix64 finalizer
        h = (h ^ (h >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h = (h ^ (h >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h ^= h >> 31;
        (h >> 11) as f64 / (1u64 << 53) as f64
    }

    fn single(&self, x: f64, y: f64, z: f64) -> f64 {
        let (x0, y0, z0) = (x.floor(), y.floor(), z.floor());
        let fade = |t: f64| t * t * (3.0 - 2.0 * t);
        let (tx, ty, tz) = (fade(x - x0), fade(y - y0), fade(z - z0));
        let (ix, iy, iz) = (x0 as i64, y0 as i64, z0 as i64);
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let mut acc = [0.0; 4];
        for (k, slot) in acc.iter_mut().enumerate() {
            let (dy, dz) = ((k & 1) as i64, (k >> 1) as i64);
            *slot = lerp(
                self.lattice(ix, iy + dy, iz + dz),
                self.lattice(ix + 1, iy + dy, iz + dz),
                tx,
            );
        }
        lerp(lerp(acc[0], acc[1], ty), lerp(acc[2], acc[3], ty), tz)
    }

    pub(crate) fn fbm(&self, x: f64, y: f64, z: f64, octaves: u32) -> f64 {
        let (mut sum, mut amp, mut freq, mut norm) = (0.0, 1.0, 1.0, 0.0);
        for _ in 0..octaves.max(1) {
            sum += amp * self.single(x * freq, y * freq, z * freq);
            norm += amp;
            amp *= 0.5;
            freq *= 2.0;
        }
        sum / norm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_bounded() {
        let a = ValueNoise::new(3);
        let b = ValueNoise::new(3);
        let c = ValueNoise::new(4);
        let mut differs = false;
        for i in 0..200 {
            let p = (i as f64 * 0.37, i as f64 * -0.11, (i % 7) as f64 * 1.3);
            let va = a.fbm(p.0, p.1, p.2, 3);
            assert_eq!(va, b.fbm(p.0, p.1, p.2, 3));
            assert!((0.0..=1.0).contains(&va));
            differs |= va != c.fbm(p.0, p.1, p.2, 3);
        }
        assert!(differs);
    }
}
