use pednav::algos::SizeLogEntry;
use pednav::eval::{
    attempt_outcome, dataset_growth_report, inversions, median, twi_of_trace, yielded,
    FailureReason,
};
use pednav::geometry::Pose;
use pednav::rollout::{EpisodeTrace, StepRecord};
use pednav::world::StepEvent;
use pednav::{Action, ScenarioId};

const DT: f64 = 0.1;

/// Robot drives along +x at `speeds[i]`; one pedestrian per step.
fn trace(speeds: &[f64], peds: &[[f64; 2]], last: Vec<StepEvent>) -> EpisodeTrace {
    let mut x = 0.0;
    let n = speeds.len();
    let steps = speeds
        .iter()
        .zip(peds)
        .enumerate()
        .map(|(i, (&v, &p))| {
            x += v * DT;
            StepRecord {
                step: i + 1,
                action: Action::straight(if v == 0.0 { 0 } else { 2 }),
                robot: Pose::new(x, 0.0, 0.0),
                speed: v,
                pedestrians: vec![p],
                arc_length: x,
                events: if i + 1 == n { last.clone() } else { Vec::new() },
            }
        })
        .collect();
    EpisodeTrace {
        time_step: DT,
        goal_arc_length: 10.0,
        steps,
    }
}

#[test]
fn cross_needs_a_stop_with_someone_in_the_corridor() {
    let far = [[50.0, 50.0]; 4];
    let goal = vec![StepEvent::GoalReached];

    // Stopped while the pedestrian stands 2 m ahead on the centerline.
    let t = trace(&[1.5, 0.0, 1.5, 1.5], &[[9.0, 9.0], [2.15, 0.0], [9.0, 9.0], [9.0, 9.0]], goal.clone());
    assert!(yielded(&t, 0.9));
    assert_eq!(attempt_outcome(ScenarioId::Cross, &t, 0.9), (true, None));

    // Stopped, but nobody ahead.
    let t = trace(&[1.5, 0.0, 1.5, 1.5], &far, goal.clone());
    assert_eq!(
        attempt_outcome(ScenarioId::Cross, &t, 0.9),
        (false, Some(FailureReason::NoYield))
    );

    // Pedestrian beside the corridor, or behind the robot.
    let t = trace(&[0.0], &[[2.0, 1.2]], goal.clone());
    assert!(!yielded(&t, 0.9));
    let t = trace(&[0.0], &[[-1.0, 0.0]], goal.clone());
    assert!(!yielded(&t, 0.9));

    // Pedestrian in the corridor but the robot never stopped.
    let t = trace(&[1.2, 1.2], &[[2.0, 0.0], [2.0, 0.0]], goal.clone());
    assert!(!yielded(&t, 0.9));

    // The same trace is a success for Confront.
    assert_eq!(attempt_outcome(ScenarioId::Confront, &t, 0.9), (true, None));
}

#[test]
fn failures_are_ranked() {
    let p = [[50.0, 50.0]; 2];
    let cases = [
        (vec![StepEvent::Collision, StepEvent::OffPath], FailureReason::Collision),
        (vec![StepEvent::OffPath], FailureReason::OffPath),
        (vec![StepEvent::HorizonExhausted], FailureReason::Timeout),
    ];
    for (events, want) in cases {
        for sc in [ScenarioId::Confront, ScenarioId::Cross] {
            let t = trace(&[1.5, 0.0], &p, events.clone());
            assert_eq!(attempt_outcome(sc, &t, 0.9), (false, Some(want)));
        }
    }
}

#[test]
fn twi_is_time_before_the_first_verdict() {
    let speeds = [1.5; 40];
    let peds = [[50.0, 50.0]; 40];
    let t = trace(&speeds, &peds, vec![StepEvent::GoalReached]);
    assert!((twi_of_trace(&t, Some(12), 6.0, 0.0) - 1.2).abs() < 1e-12);
    assert!((twi_of_trace(&t, None, 6.0, 0.0) - 4.0).abs() < 1e-12);

    let t = trace(&speeds, &peds, vec![StepEvent::Collision]);
    assert!((twi_of_trace(&t, None, 6.0, 0.0) - 4.0).abs() < 1e-12);

    // Timed out after covering 6 of 10 m: credited 60% of the course time,
    // capped by the elapsed time.
    let t = trace(&[1.5; 40], &peds, vec![StepEvent::HorizonExhausted]);
    assert!((twi_of_trace(&t, None, 5.0, 0.0) - 3.0).abs() < 1e-12);
    assert!((twi_of_trace(&t, None, 50.0, 0.0) - 4.0).abs() < 1e-12);
}

#[test]
fn growth_rows_follow_the_size_log() {
    let entry = |iteration, sub: [usize; 4]| SizeLogEntry {
        iteration,
        meta: 0,
        sub,
    };
    let log = [
        entry(0, [100, 100, 100, 100]),
        entry(1, [140, 100, 130, 150]),
        entry(2, [142, 100, 150, 151]),
    ];
    let rows = dataset_growth_report(&log).unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0].increments, [40, 0, 30, 50]);
    assert_eq!(rows[1].increments, [2, 0, 20, 1]);
    assert_eq!(rows[1].cumulative, [142, 100, 150, 151]);
    // 2/142 and 1/151 are under 5%, 20/150 is not, zero counts.
    assert_eq!(rows[1].converged, [true, true, false, true]);
    assert!(dataset_growth_report(&log[..1]).is_err());
}

#[test]
fn medians_and_inversions() {
    assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
    assert_eq!(median(&[4.0, 1.0, 3.0, 2.0]), 2.5);
    assert!(median(&[]).is_nan());
    assert_eq!(inversions(&[1, 2, 2, 3]), 0);
    assert_eq!(inversions(&[5, 3, 4, 2]), 2);
}
