//! Block-fading small-scale channels and distance-dependent link gains.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::scenario::{Point, Scenario, SimParams};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

/// Small-scale fading for one block of `T` slots.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelBlock {
    pub num_uavs: usize,
    pub num_users: usize,
    /// `g_{l,k}` stored at `l * K + k`, length `M`.
    pub g_data: Vec<CVector>,
    /// Fronthaul transmit factor per UAV, length `N`.
    pub g_fh_tx: Vec<CVector>,
    /// Fronthaul receive factor per UAV, length `M`.
    pub g_fh_rx: Vec<CVector>,
    pub block_index: u64,
}

impl ChannelBlock {
    pub fn g(&self, l: usize, k: usize) -> &CVector {
        &self.g_data[l * self.num_users + k]
    }

    /// Rank-one fronthaul small-scale matrix `g_tx g_rx^H` (N x M).
    pub fn g_fh(&self, l: usize) -> CMatrix {
        &self.g_fh_tx[l] * self.g_fh_rx[l].adjoint()
    }

    pub fn check_dims(&self, p: &SimParams) -> Result<()> {
        let ok = self.num_uavs == p.num_uavs
            && self.num_users == p.num_users
            && self.g_data.len() == p.num_uavs * p.num_users
            && self.g_data.iter().all(|g| g.len() == p.uav_antennas)
            && self.g_fh_tx.len() == p.num_uavs
            && self.g_fh_tx.iter().all(|g| g.len() == p.bs_antennas)
            && self.g_fh_rx.len() == p.num_uavs
            && self.g_fh_rx.iter().all(|g| g.len() == p.uav_antennas);
        if !ok {
            return Err(Error::Dimension("channel block does not match scenario".into()));
        }
        let finite = self
            .g_data
            .iter()
            .chain(&self.g_fh_tx)
            .chain(&self.g_fh_rx)
            .all(|g| g.iter().all(|c| c.re.is_finite() && c.im.is_finite()));
        if !finite {
            return Err(Error::Dimension("non-finite channel entry".into()));
        }
        Ok(())
    }
}

/// A channel gain together with the link distance it was evaluated at.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkGain<G> {
    pub gain: G,
    pub distance_m: f64,
}

fn block_rng(scenario_seed: u64, block_seed: u64) -> ChaCha8Rng {
    // splitmix64 finalizer over both seeds
    let mut z = scenario_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(block_seed ^ 0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn unit_phase<R: Rng>(rng: &mut R) -> Complex64 {
    Complex64::from_polar(1.0, 2.0 * PI * rng.random::<f64>())
}

/// One Rician entry with factor `kappa`: LoS of power `kappa/(kappa+1)` with
/// uniform phase plus CN(0, 1/(kappa+1)) scatter.
pub fn rician_entry<R: Rng>(rng: &mut R, kappa: f64) -> Complex64 {
    let los = (kappa / (kappa + 1.0)).sqrt() * unit_phase(rng);
    let sd = (0.5 / (kappa + 1.0)).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    los + Complex64::new(sd * re, sd * im)
}

pub fn draw_block(s: &Scenario, block_seed: u64) -> ChannelBlock {
    let p = &s.params;
    let mut rng = block_rng(s.seed, block_seed);
    let kappa = p.rice_factor;
    let g_data = (0..p.num_uavs * p.num_users)
        .map(|_| CVector::from_fn(p.uav_antennas, |_, _| rician_entry(&mut rng, kappa)))
        .collect();
    let g_fh_tx = (0..p.num_uavs)
        .map(|_| CVector::from_fn(p.bs_antennas, |_, _| unit_phase(&mut rng)))
        .collect();
    let g_fh_rx = (0..p.num_uavs)
        .map(|_| CVector::from_fn(p.uav_antennas, |_, _| unit_phase(&mut rng)))
        .collect();
    ChannelBlock {
        num_uavs: p.num_uavs,
        num_users: p.num_users,
        g_data,
        g_fh_tx,
        g_fh_rx,
        block_index: block_seed,
    }
}

/// Large-scale power gain `A d^{-alpha}`.
pub fn path_gain(antenna_gain: f64, exponent: f64, distance: f64) -> f64 {
    antenna_gain * distance.powf(-exponent)
}

fn distance(a: &Point, b: &Point) -> Result<f64> {
    let d = (a - b).norm();
    if d == 0.0 {
        return Err(Error::Singularity);
    }
    Ok(d)
}

/// `h_{l,k} = sqrt(A d^{-alpha}) g_{l,k}`.
pub fn data_channel(
    block: &ChannelBlock,
    l: usize,
    k: usize,
    uav_pos: &Point,
    user_pos: &Point,
    params: &SimParams,
) -> Result<LinkGain<CVector>> {
    let d = distance(uav_pos, user_pos)?;
    let amp = path_gain(params.antenna_gain_data, params.pathloss_exponent_data, d).sqrt();
    Ok(LinkGain {
        gain: block.g(l, k) * Complex64::from(amp),
        distance_m: d,
    })
}

/// `H_F = sqrt(A_F d_F^{-alpha_F}) g_tx g_rx^H`.
pub fn fronthaul_channel(
    block: &ChannelBlock,
    l: usize,
    uav_pos: &Point,
    bs_pos: &Point,
    params: &SimParams,
) -> Result<LinkGain<CMatrix>> {
    let d = distance(uav_pos, bs_pos)?;
    let amp = path_gain(params.antenna_gain_fh, params.pathloss_exponent_fh, d).sqrt();
    Ok(LinkGain {
        gain: block.g_fh(l) * Complex64::from(amp),
        distance_m: d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, Layout};

    fn scenario() -> Scenario {
        generate_scenario(&SimParams::desk(), &Layout::default(), 5).unwrap()
    }

    #[test]
    fn rician_second_moment_is_one() {
        // E|g|^2 = kappa/(kappa+1) + 1/(kappa+1) = 1
        let kappa = 10f64.powf(-0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let mean = (0..n).map(|_| rician_entry(&mut rng, kappa).norm_sqr()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "sample mean {mean}");
    }

    #[test]
    fn pure_los_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let g = rician_entry(&mut rng, 1e14);
            assert!((g.norm() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn blocks_are_seeded() {
        let s = scenario();
        assert_eq!(draw_block(&s, 0), draw_block(&s, 0));
        assert_ne!(draw_block(&s, 0), draw_block(&s, 1));
        draw_block(&s, 0).check_dims(&s.params).unwrap();
    }

    #[test]
    fn unit_path_loss_returns_small_scale() {
        let s = scenario();
        let b = draw_block(&s, 0);
        let mut p = s.params.clone();
        p.antenna_gain_data = 1.0;
        p.pathloss_exponent_data = 2.0;
        let uav = Point::new(0.0, 0.0, 1.0);
        let user = Point::new(0.0, 0.0, 0.0);
        let h = data_channel(&b, 1, 0, &uav, &user, &p).unwrap();
        assert_eq!(h.gain, *b.g(1, 0));
    }

    #[test]
    fn doubling_distance_quarters_power() {
        let s = scenario();
        let b = draw_block(&s, 0);
        let mut p = s.params.clone();
        p.pathloss_exponent_data = 2.0;
        let user = Point::new(100.0, 50.0, 0.0);
        let near = user + Point::new(30.0, 40.0, 0.0);
        let far = user + Point::new(60.0, 80.0, 0.0);
        let a = data_channel(&b, 0, 1, &near, &user, &p).unwrap().gain.norm_squared();
        let c = data_channel(&b, 0, 1, &far, &user, &p).unwrap().gain.norm_squared();
        assert!((a / c - 4.0).abs() < 1e-12);
    }

    #[test]
    fn euclidean_distance() {
        let s = scenario();
        let b = draw_block(&s, 0);
        let h = data_channel(
            &b,
            0,
            0,
            &Point::new(0.0, 0.0, 100.0),
            &Point::new(300.0, 400.0, 0.0),
            &s.params,
        )
        .unwrap();
        let oracle = (300.0f64 * 300.0 + 400.0 * 400.0 + 100.0 * 100.0).sqrt();
        assert!((h.distance_m - oracle).abs() < 1e-9);
        assert!((h.distance_m - 509.901_951_359_278_5).abs() < 1e-9);
    }

    #[test]
    fn zero_distance_is_singular() {
        let s = scenario();
        let b = draw_block(&s, 0);
        let p = Point::new(1.0, 2.0, 3.0);
        assert!(matches!(data_channel(&b, 0, 0, &p, &p, &s.params), Err(Error::Singularity)));
        assert!(matches!(fronthaul_channel(&b, 0, &p, &p, &s.params), Err(Error::Singularity)));
    }

    #[test]
    fn fronthaul_is_rank_one_with_expected_energy() {
        let s = scenario();
        let b = draw_block(&s, 3);
        let p = &s.params;
        for l in 0..p.num_uavs {
            let pos = s.geometry.uav_start_positions[l];
            let h = fronthaul_channel(&b, l, &pos, &s.geometry.bs_position, p).unwrap();
            let sv = h.gain.clone().singular_values();
            let mut sv: Vec<f64> = sv.iter().copied().collect();
            sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
            assert!(sv[1] <= 1e-10 * sv[0]);
            let expect = path_gain(p.antenna_gain_fh, p.pathloss_exponent_fh, h.distance_m)
                * b.g_fh_tx[l].norm_squared()
                * b.g_fh_rx[l].norm_squared();
            let got = h.gain.norm_squared();
            assert!((got - expect).abs() <= 1e-10 * expect);
        }
    }

    #[test]
    fn unit_reference_fronthaul() {
        let s = scenario();
        let b = draw_block(&s, 0);
        let mut p = s.params.clone();
        p.antenna_gain_fh = 1.0;
        let bs = Point::new(0.0, 0.0, 0.0);
        let h = fronthaul_channel(&b, 0, &Point::new(0.0, 1.0, 0.0), &bs, &p).unwrap();
        let expect = b.g_fh_tx[0].norm() * b.g_fh_rx[0].norm();
        assert!((h.gain.norm() - expect).abs() < 1e-12);
    }
}
