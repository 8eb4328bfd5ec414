//! Air-to-ground channel: LoS probability, path loss, Rice factor and
//! small-scale fading samples. `lg` is the base-10 logarithm throughout.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::geometry::Position;

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("UAV altitude must be positive, got {0} m")]
    NonPositiveAltitude(f64),
    #[error("link distance must be positive")]
    ZeroDistance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkGeometry {
    pub tx: Position,
    pub rx: Position,
    pub d_3d: f64,
    pub d_2d: f64,
}

impl LinkGeometry {
    pub fn new(tx: Position, rx: Position) -> Self {
        Self {
            tx,
            rx,
            d_3d: tx.distance(&rx),
            d_2d: tx.horizontal_distance(&rx),
        }
    }
}

/// Per-link large-scale statistics: LoS probability, the linear path gains of
/// both propagation states and the Rice shape factor of the LoS state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelGains {
    pub p_los: f64,
    pub g_los: f64,
    pub g_nlos: f64,
    pub k_rice: f64,
}

impl ChannelGains {
    /// Gains of the link from a UAV at `tx` to a ground or BS receiver at `rx`.
    pub fn between(tx: Position, rx: Position, fc_ghz: f64) -> Result<Self, ChannelError> {
        let geom = LinkGeometry::new(tx, rx);
        let h = tx.z;
        Ok(Self {
            p_los: los_probability(&geom, h)?,
            g_los: db_to_gain(path_loss_db(&geom, h, fc_ghz, true)?),
            g_nlos: db_to_gain(path_loss_db(&geom, h, fc_ghz, false)?),
            k_rice: rice_k_factor(h)?,
        })
    }

    pub fn gain(&self, los: bool) -> f64 {
        if los {
            self.g_los
        } else {
            self.g_nlos
        }
    }
}

/// Linear power gain of a loss given in dB.
pub fn db_to_gain(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}

fn check_altitude(h: f64) -> Result<(), ChannelError> {
    if h > 0.0 && h.is_finite() {
        Ok(())
    } else {
        Err(ChannelError::NonPositiveAltitude(h))
    }
}

/// Critical horizontal distance below which the link is always LoS.
pub fn los_critical_distance(h: f64) -> f64 {
    (294.05 * h.log10() - 432.94).max(18.0)
}

pub fn los_probability(geom: &LinkGeometry, h: f64) -> Result<f64, ChannelError> {
    check_altitude(h)?;
    let d_c = los_critical_distance(h);
    let d = geom.d_2d;
    if d < d_c {
        return Ok(1.0);
    }
    let p0 = 233.98 * h.log10() - 0.95;
    let ratio = d_c / d;
    Ok((ratio + (1.0 - ratio) * (-d / p0).exp()).clamp(0.0, 1.0))
}

pub fn path_loss_db(geom: &LinkGeometry, h: f64, fc_ghz: f64, los: bool) -> Result<f64, ChannelError> {
    check_altitude(h)?;
    if !(geom.d_3d > 0.0) {
        return Err(ChannelError::ZeroDistance);
    }
    let lg_d = geom.d_3d.log10();
    let lg_h = h.log10();
    let lg_fc = 20.0 * fc_ghz.log10();
    let free_space = 20.0 * lg_d + lg_fc + 32.45;
    let los_loss = free_space.max(30.9 + (22.25 - 0.5 * lg_h) * lg_d + lg_fc);
    if los {
        Ok(los_loss)
    } else {
        Ok(los_loss.max(32.4 + (43.2 - 7.6 * lg_h) * lg_d + lg_fc))
    }
}

/// Linear Rice shape factor, `K[dB] = 4.217 lg(h) + 5.787`.
pub fn rice_k_factor(h: f64) -> Result<f64, ChannelError> {
    check_altitude(h)?;
    Ok(10f64.powf((4.217 * h.log10() + 5.787) / 10.0))
}

/// Rice magnitude with `Omega = 1` built from two standard normals.
#[inline]
pub fn rice_from_normals(k_rice: f64, x: f64, y: f64) -> f64 {
    let nu = (k_rice / (k_rice + 1.0)).sqrt();
    let sigma = (0.5 / (k_rice + 1.0)).sqrt();
    (nu + sigma * x).hypot(sigma * y)
}

/// Unit-scale Rayleigh magnitude built from two standard normals.
#[inline]
pub fn rayleigh_from_normals(x: f64, y: f64) -> f64 {
    x.hypot(y)
}

/// Draws one fading coefficient: Rice (`Omega = 1`, shape `k_rice`) under LoS,
/// unit-scale Rayleigh otherwise.
pub fn sample_fading(los: bool, k_rice: f64, rng: &mut impl Rng) -> f64 {
    let x: f64 = StandardNormal.sample(rng);
    let y: f64 = StandardNormal.sample(rng);
    if los {
        rice_from_normals(k_rice, x, y)
    } else {
        rayleigh_from_normals(x, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::special::{rayleigh_cdf, rice_mean};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn geom_2d(d_2d: f64, h: f64) -> LinkGeometry {
        LinkGeometry::new(Position::new(d_2d, 0.0, h), Position::ground(0.0, 0.0))
    }

    #[test]
    fn los_probability_examples() {
        assert_eq!(los_probability(&geom_2d(100.0, 100.0), 100.0).unwrap(), 1.0);
        assert_eq!(los_probability(&geom_2d(0.0, 73.0), 73.0).unwrap(), 1.0);
        // 155.16/500 + (1 - 155.16/500) exp(-500/467.01)
        let d_c: f64 = 294.05 * 2.0 - 432.94;
        let p0: f64 = 233.98 * 2.0 - 0.95;
        let expected = d_c / 500.0 + (1.0 - d_c / 500.0) * (-500.0 / p0).exp();
        let p = los_probability(&geom_2d(500.0, 100.0), 100.0).unwrap();
        assert_relative_eq!(p, expected, max_relative = 1e-12);
        assert!((p - 0.547).abs() < 5e-4);
        assert!(matches!(
            los_probability(&geom_2d(10.0, 0.0), 0.0),
            Err(ChannelError::NonPositiveAltitude(_))
        ));
    }

    #[test]
    fn los_probability_continuous_at_critical_distance() {
        for h in [50.0, 100.0, 150.0] {
            let d_c = los_critical_distance(h);
            let at = los_probability(&geom_2d(d_c, h), h).unwrap();
            let below = los_probability(&geom_2d(d_c * (1.0 - 1e-12), h), h).unwrap();
            assert!((at - below).abs() < 1e-9);
        }
    }

    #[test]
    fn path_loss_examples() {
        // d = 100 m, h = 100 m, fc = 2 GHz
        let g = LinkGeometry::new(Position::new(0.0, 0.0, 100.0), Position::ground(0.0, 0.0));
        let lg_fc = 20.0 * 2f64.log10();
        let free_space = 40.0 + lg_fc + 32.45;
        let uma = 30.9 + 21.25 * 2.0 + lg_fc;
        let nlos = 32.4 + 28.0 * 2.0 + lg_fc;
        assert_relative_eq!(free_space, 78.47, epsilon = 0.01);
        assert_relative_eq!(uma, 79.42, epsilon = 0.01);
        assert_relative_eq!(nlos, 94.42, epsilon = 0.01);
        assert_relative_eq!(path_loss_db(&g, 100.0, 2.0, true).unwrap(), uma, max_relative = 1e-12);
        assert_relative_eq!(path_loss_db(&g, 100.0, 2.0, false).unwrap(), nlos, max_relative = 1e-12);
        let zero = LinkGeometry::new(Position::new(1.0, 1.0, 1.0), Position::new(1.0, 1.0, 1.0));
        assert_eq!(path_loss_db(&zero, 1.0, 2.0, true), Err(ChannelError::ZeroDistance));
    }

    #[test]
    fn nlos_never_below_los_and_monotone_in_distance() {
        for h in [50.0, 90.0, 150.0] {
            let mut prev = (0.0, 0.0);
            for i in 1..200 {
                let d = i as f64 * 5.0;
                let g = LinkGeometry::new(Position::new(d, 0.0, h), Position::ground(0.0, 0.0));
                let l = path_loss_db(&g, h, 2.0, true).unwrap();
                let n = path_loss_db(&g, h, 2.0, false).unwrap();
                assert!(n >= l);
                assert!(l > prev.0 && n > prev.1);
                prev = (l, n);
            }
        }
    }

    #[test]
    fn rice_factor_examples() {
        let k100 = rice_k_factor(100.0).unwrap();
        assert_relative_eq!(10.0 * k100.log10(), 14.221, epsilon = 1e-9);
        assert_relative_eq!(k100, 26.43, epsilon = 0.01);
        assert_relative_eq!(10.0 * rice_k_factor(10.0).unwrap().log10(), 10.004, epsilon = 1e-9);
        assert!(rice_k_factor(120.0).unwrap() > k100);
    }

    #[test]
    fn rayleigh_samples_match_cdf() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut s: Vec<f64> = (0..n).map(|_| sample_fading(false, 1.0, &mut rng)).collect();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut ks: f64 = 0.0;
        for (i, x) in s.iter().enumerate() {
            let f = rayleigh_cdf(*x);
            ks = ks
                .max((f - i as f64 / n as f64).abs())
                .max(((i + 1) as f64 / n as f64 - f).abs());
        }
        assert!(ks < 0.01, "KS distance {ks}");
    }

    #[test]
    fn rice_sample_mean_matches_analytic() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let k = 26.43;
        let n = 1_000_000;
        let mean = (0..n).map(|_| sample_fading(true, k, &mut rng)).sum::<f64>() / n as f64;
        assert_relative_eq!(mean, rice_mean(k), max_relative = 0.01);
    }

    #[test]
    fn fading_is_reproducible() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..16).map(|i| sample_fading(i % 2 == 0, 10.0, &mut rng)).collect::<Vec<_>>()
        };
        assert_eq!(draw(3), draw(3));
    }
}
