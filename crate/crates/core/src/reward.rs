//! Shaped reward: `R = w_nav·R_nav + w_manip·R_manip + w_efficiency·R_efficiency`.
//!
//! Navigation pays for every new closest approach of the base to the target
//! and a one-time bonus on arrival, after which it is cut off. Manipulation
//! pays for closest approaches of the gripper tip to the target region
//! (weighted by `exp(-5·d)·1000`) until the region is first reached, plus
//! progress deltas and one-time finish/grasp bonuses. Efficiency charges a
//! per-step penalty, tip motion and invalid actions.

use crate::env::TaskKind;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub w_nav: f64,
    pub w_nav_shaping: f64,
    pub r_reach_target: f64,
    pub w_manip: f64,
    pub w_manip_shaping: f64,
    pub w_progress: f64,
    pub r_finish_task: f64,
    pub w_grasp: f64,
    pub r_step_penalty: f64,
    pub w_ee_moved: f64,
    pub r_invalid_action: f64,
    pub w_efficiency: f64,
    /// Base-to-target distance that counts as having reached the target.
    pub d_reach: f64,
    /// Tip-to-target distance that counts as having reached the target region.
    pub ee_region_radius: f64,
}

impl RewardWeights {
    pub fn for_task(task: TaskKind) -> Self {
        let table = task == TaskKind::CleanTable;
        Self {
            w_nav: 1.0,
            w_nav_shaping: 2.0,
            r_reach_target: 2.0,
            w_manip: 1.0,
            w_manip_shaping: 0.02,
            w_progress: if table { 100.0 } else { 80.0 },
            r_finish_task: 20.0,
            w_grasp: 2.0,
            r_step_penalty: -0.01,
            w_ee_moved: -0.01,
            r_invalid_action: -0.01,
            w_efficiency: 1.0,
            d_reach: if table { 0.6 } else { 1.0 },
            ee_region_radius: 0.15,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w_nav,
            self.w_nav_shaping,
            self.r_reach_target,
            self.w_manip,
            self.w_manip_shaping,
            self.w_progress,
            self.r_finish_task,
            self.w_grasp,
            self.r_step_penalty,
            self.w_ee_moved,
            self.r_invalid_action,
            self.w_efficiency,
            self.d_reach,
            self.ee_region_radius,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::Validation("reward weights must be finite".into()))
        }
    }
}

/// Per-episode trackers behind the shaping terms and one-time bonuses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardState {
    /// Closest base-to-target distance while the target was unreached.
    pub d_closest: f64,
    /// Closest tip-to-region distance while the region was unreached.
    pub d_ee_closest: f64,
    pub reached_target: bool,
    pub ee_reached_region: bool,
    pub grasp_rewarded: bool,
    pub finished: bool,
    pub last_progress: f64,
}

impl RewardState {
    pub fn new(d_base: f64, d_ee: f64) -> Self {
        Self {
            d_closest: d_base,
            d_ee_closest: d_ee,
            reached_target: false,
            ee_reached_region: false,
            grasp_rewarded: false,
            finished: false,
            last_progress: 0.0,
        }
    }
}

/// Everything the reward needs from one environment step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMeasurements {
    pub d_base: f64,
    pub d_ee: f64,
    pub progress: f64,
    pub ee_moved: f64,
    pub action_valid: bool,
    pub grasped_now: bool,
    pub finished_now: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub nav: f64,
    pub manip: f64,
    pub efficiency: f64,
    pub total: f64,
    pub nav_shaping: f64,
    pub reach_bonus: f64,
    pub manip_shaping: f64,
    pub progress_term: f64,
    pub finish_bonus: f64,
    pub grasp_bonus: f64,
}

fn check_distance(name: &str, d: f64) -> Result<()> {
    if !d.is_finite() || d < 0.0 {
        return Err(Error::Validation(format!("{name} must be a finite non-negative distance, got {d}")));
    }
    Ok(())
}

/// Navigation term. Returns `(reward, shaping part, reach bonus)` and
/// updates the trackers.
pub fn nav_reward(
    rs: &mut RewardState,
    w: &RewardWeights,
    d_current: f64,
    reached_now: bool,
) -> Result<(f64, f64, f64)> {
    check_distance("base distance", d_current)?;
    if rs.reached_target {
        return Ok((0.0, 0.0, 0.0));
    }
    let shaping = w.w_nav_shaping * (rs.d_closest - d_current).max(0.0);
    let bonus = if reached_now { w.r_reach_target } else { 0.0 };
    rs.d_closest = rs.d_closest.min(d_current);
    rs.reached_target = reached_now;
    Ok((shaping + bonus, shaping, bonus))
}

/// Manipulation term. Returns `(reward, shaping, progress, finish, grasp)`.
pub fn manip_reward(
    rs: &mut RewardState,
    w: &RewardWeights,
    d_ee: f64,
    progress: f64,
    finished_now: bool,
    grasped_now: bool,
) -> Result<(f64, f64, f64, f64, f64)> {
    check_distance("end-effector distance", d_ee)?;
    if !(0.0..=1.0).contains(&progress) {
        return Err(Error::Validation(format!("progress {progress} outside [0, 1]")));
    }
    let mut shaping = 0.0;
    if !rs.ee_reached_region {
        shaping = w.w_manip_shaping
            * (-5.0 * d_ee).exp()
            * 1000.0
            * (rs.d_ee_closest - d_ee).max(0.0);
        rs.d_ee_closest = rs.d_ee_closest.min(d_ee);
        if d_ee <= w.ee_region_radius {
            rs.ee_reached_region = true;
        }
    }
    let progress_term = w.w_progress * (progress - rs.last_progress);
    rs.last_progress = progress;
    let finish = if finished_now && !rs.finished {
        rs.finished = true;
        w.r_finish_task
    } else {
        0.0
    };
    let grasp = if grasped_now && !rs.grasp_rewarded {
        rs.grasp_rewarded = true;
        w.w_grasp
    } else {
        0.0
    };
    Ok((shaping + progress_term + finish + grasp, shaping, progress_term, finish, grasp))
}

pub fn efficiency_reward(w: &RewardWeights, ee_moved: f64, action_valid: bool) -> Result<f64> {
    check_distance("end-effector motion", ee_moved)?;
    let invalid = if action_valid { 0.0 } else { w.r_invalid_action };
    Ok(w.r_step_penalty + w.w_ee_moved * ee_moved + invalid)
}

/// Full step reward. The state is only advanced when every component is
/// valid.
pub fn total_reward(
    rs: &mut RewardState,
    w: &RewardWeights,
    m: &StepMeasurements,
) -> Result<RewardBreakdown> {
    let mut next = *rs;
    let reached_now = m.d_base <= w.d_reach;
    let (nav, nav_shaping, reach_bonus) = nav_reward(&mut next, w, m.d_base, reached_now)?;
    let (manip, manip_shaping, progress_term, finish_bonus, grasp_bonus) =
        manip_reward(&mut next, w, m.d_ee, m.progress, m.finished_now, m.grasped_now)?;
    let efficiency = efficiency_reward(w, m.ee_moved, m.action_valid)?;
    *rs = next;
    Ok(RewardBreakdown {
        nav,
        manip,
        efficiency,
        total: w.w_nav * nav + w.w_manip * manip + w.w_efficiency * efficiency,
        nav_shaping,
        reach_bonus,
        manip_shaping,
        progress_term,
        finish_bonus,
        grasp_bonus,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn door_w() -> RewardWeights {
        RewardWeights::for_task(TaskKind::DoorPush)
    }

    #[test]
    fn weights_by_task() {
        assert_eq!(RewardWeights::for_task(TaskKind::DoorPull).w_progress, 80.0);
        assert_eq!(RewardWeights::for_task(TaskKind::OpenFridge).w_progress, 80.0);
        assert_eq!(RewardWeights::for_task(TaskKind::CleanTable).w_progress, 100.0);
        assert_eq!(RewardWeights::for_task(TaskKind::CleanTable).d_reach, 0.6);
    }

    #[test]
    fn nav_shaping_examples() {
        let w = door_w();
        let mut rs = RewardState::new(2.0, 1.0);
        let (r, ..) = nav_reward(&mut rs, &w, 1.9, false).unwrap();
        assert_abs_diff_eq!(r, 0.2, epsilon = 1e-12);
        let (r, ..) = nav_reward(&mut rs, &w, 2.5, false).unwrap();
        assert_eq!(r, 0.0);
        assert_eq!(rs.d_closest, 1.9);
        let (r, shaping, bonus) = nav_reward(&mut rs, &w, 0.9, true).unwrap();
        assert_abs_diff_eq!(shaping, 2.0, epsilon = 1e-12);
        assert_eq!(bonus, 2.0);
        assert_abs_diff_eq!(r, 4.0, epsilon = 1e-12);
        let (r, ..) = nav_reward(&mut rs, &w, 0.1, true).unwrap();
        assert_eq!(r, 0.0);
        assert!(nav_reward(&mut rs, &w, -0.1, false).is_err());
    }

    #[test]
    fn manip_shaping_example() {
        let w = door_w();
        let mut rs = RewardState::new(3.0, 0.5);
        let (r, shaping, ..) = manip_reward(&mut rs, &w, 0.4, 0.0, false, false).unwrap();
        let expected = 0.02 * (-2.0f64).exp() * 1000.0 * 0.1;
        assert_abs_diff_eq!(shaping, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(r, 0.27067, epsilon = 1e-5);
    }

    #[test]
    fn progress_finish_and_gate() {
        let w = door_w();
        let mut rs = RewardState::new(3.0, 0.5);
        let (r, ..) = manip_reward(&mut rs, &w, 0.5, 0.05, false, false).unwrap();
        assert_abs_diff_eq!(r, 4.0, epsilon = 1e-12);
        let (_, _, _, finish, _) = manip_reward(&mut rs, &w, 0.5, 0.95, true, false).unwrap();
        assert_eq!(finish, 20.0);
        let (_, _, _, finish, _) = manip_reward(&mut rs, &w, 0.5, 0.95, true, false).unwrap();
        assert_eq!(finish, 0.0);
        // Entering the region latches the shaping off.
        manip_reward(&mut rs, &w, 0.1, 0.95, false, false).unwrap();
        let (_, shaping, ..) = manip_reward(&mut rs, &w, 0.05, 0.95, false, false).unwrap();
        assert_eq!(shaping, 0.0);
        assert!(manip_reward(&mut rs, &w, 0.05, 1.5, false, false).is_err());
    }

    #[test]
    fn grasp_bonus_once() {
        let w = RewardWeights::for_task(TaskKind::DoorPull);
        let mut rs = RewardState::new(3.0, 0.5);
        let (.., g) = manip_reward(&mut rs, &w, 0.5, 0.0, false, true).unwrap();
        assert_eq!(g, 2.0);
        let (.., g) = manip_reward(&mut rs, &w, 0.5, 0.0, false, true).unwrap();
        assert_eq!(g, 0.0);
    }

    #[test]
    fn efficiency_examples() {
        let w = door_w();
        assert_abs_diff_eq!(efficiency_reward(&w, 0.1, true).unwrap(), -0.011, epsilon = 1e-12);
        assert_abs_diff_eq!(efficiency_reward(&w, 0.0, true).unwrap(), -0.01, epsilon = 1e-12);
        assert_abs_diff_eq!(efficiency_reward(&w, 0.0, false).unwrap(), -0.02, epsilon = 1e-12);
    }

    #[test]
    fn total_examples() {
        let w = door_w();
        let mut rs = RewardState::new(3.0, 1.0);
        let idle = StepMeasurements {
            d_base: 3.0,
            d_ee: 1.0,
            progress: 0.0,
            ee_moved: 0.0,
            action_valid: true,
            grasped_now: false,
            finished_now: false,
        };
        let b = total_reward(&mut rs, &w, &idle).unwrap();
        assert_abs_diff_eq!(b.total, -0.01, epsilon = 1e-12);

        let mut rs = RewardState::new(2.0, 0.5);
        let m = StepMeasurements { d_base: 1.9, d_ee: 0.4, ee_moved: 0.1, ..idle };
        let b = total_reward(&mut rs, &w, &m).unwrap();
        assert_abs_diff_eq!(b.nav, 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(b.efficiency, -0.011, epsilon = 1e-12);
        assert_abs_diff_eq!(b.total, 0.2 + 0.02 * (-2.0f64).exp() * 100.0 - 0.011, epsilon = 1e-12);
        assert_abs_diff_eq!(b.total, 0.45967, epsilon = 1e-5);
    }

    #[test]
    fn invalid_input_leaves_state_untouched() {
        let w = door_w();
        let mut rs = RewardState::new(2.0, 0.5);
        let before = rs;
        let m = StepMeasurements {
            d_base: 1.0,
            d_ee: 0.3,
            progress: 2.0,
            ee_moved: 0.0,
            action_valid: true,
            grasped_now: false,
            finished_now: false,
        };
        assert!(total_reward(&mut rs, &w, &m).is_err());
        assert_eq!(rs, before);
    }
}
