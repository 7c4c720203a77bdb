use pednav::expert::{check_intervention, expert_action, meta_label, DetectorHistory, ExpertConfig};
use pednav::rollout::{run_controller, EpisodeSpec};
use pednav::world::StepEvent;
use pednav::ScenarioId;

#[test]
fn expert_is_safe_and_never_triggers_the_detector() {
    let cfg = ExpertConfig::default();
    let mut failures = Vec::new();
    for scenario in ScenarioId::ALL {
        for seed in 0..100u64 {
            let spec = EpisodeSpec::new(scenario, seed % 7, seed);
            let mut history = DetectorHistory::new();
            let mut fired = None;
            let (_, trace) = run_controller(spec.world_config(), |w, _| {
                let a = expert_action(&cfg, w, meta_label(w));
                let v = check_intervention(&cfg, w, a, &mut history);
                if v.intervene && fired.is_none() {
                    fired = Some((w.step_index(), v.reason));
                }
                Ok(Some(a))
            })
            .unwrap();
            let end = trace.final_events().to_vec();
            if trace.has(StepEvent::Collision) || trace.has(StepEvent::OffPath) || fired.is_some()
                || end != [StepEvent::GoalReached]
            {
                failures.push(format!("{scenario} seed {seed}: {end:?} fired {fired:?}"));
            }
        }
    }
    assert!(failures.is_empty(), "{} failures:\n{}", failures.len(), failures.join("\n"));
}
