use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use auditkit::allocation::{allocate, reallocate_dropout, AllocationError, Tester};
use auditkit::design::AuditDesign;
use auditkit::ingest::load_fixture_dir;
use auditkit::prompts::{generate_prompts, Platform, PromptSpec};
use proptest::prelude::*;

fn prompts(n: u32, seed: u64) -> Vec<PromptSpec> {
    let design = AuditDesign::paper();
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures");
    let pool = load_fixture_dir(&dir).unwrap().pool(&design).unwrap();
    generate_prompts(&design, &pool, n, seed).unwrap()
}

fn poster(cell_id: &str) -> &str {
    cell_id
        .split(';')
        .find_map(|kv| kv.strip_prefix("ad_poster="))
        .unwrap()
}

fn tester_strategy() -> impl Strategy<Value = Vec<Tester>> {
    let one = (any::<bool>(), 0u8..3).prop_map(|(us, p)| (us, p));
    prop::collection::vec(one, 0..6).prop_map(|specs| {
        let mut team: Vec<Tester> = specs
            .into_iter()
            .enumerate()
            .map(|(i, (us, p))| Tester {
                tester_id: format!("t{i}"),
                location_kind: if us { "US" } else { "Non-US" }.into(),
                platforms: match p {
                    0 => vec![Platform::Facebook],
                    1 => vec![Platform::Google],
                    _ => vec![Platform::Facebook, Platform::Google],
                },
                auth_token: None,
            })
            .collect();
        for kind in ["US", "Non-US"] {
            team.push(Tester {
                tester_id: format!("all-{kind}"),
                location_kind: kind.into(),
                platforms: vec![Platform::Facebook, Platform::Google],
                auth_token: None,
            });
        }
        team
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn allocation_is_balanced_and_eligible(team in tester_strategy(), n in 1u32..5, seed in any::<u64>()) {
        let design = AuditDesign::paper();
        let prompts = prompts(n, seed);
        let out = allocate(&design, &prompts, &team, seed, "2018-09-17T00:00:00Z".parse().unwrap()).unwrap();
        prop_assert_eq!(out.len(), prompts.len());
        let ids: BTreeSet<&str> = out.iter().map(|a| a.prompt_id.as_str()).collect();
        prop_assert_eq!(ids.len(), prompts.len());
        let by_prompt: BTreeMap<&str, &PromptSpec> = prompts.iter().map(|p| (p.prompt_id.as_str(), p)).collect();
        let by_tester: BTreeMap<&str, &Tester> = team.iter().map(|t| (t.tester_id.as_str(), t)).collect();
        let mut load: BTreeMap<(Platform, &str, &str), usize> = BTreeMap::new();
        for a in &out {
            let platform = by_prompt[a.prompt_id.as_str()].creative.platform;
            let t = by_tester[a.tester_id.as_str()];
            prop_assert!(t.platforms.contains(&platform));
            prop_assert_eq!(t.location_kind.as_str(), poster(&a.cell_id));
            *load.entry((platform, poster(&a.cell_id), a.tester_id.as_str())).or_default() += 1;
        }
        for platform in [Platform::Facebook, Platform::Google] {
            for kind in ["US", "Non-US"] {
                let counts: Vec<usize> = team
                    .iter()
                    .filter(|t| t.location_kind == kind && t.platforms.contains(&platform))
                    .map(|t| load.get(&(platform, kind, t.tester_id.as_str())).copied().unwrap_or(0))
                    .collect();
                let spread = counts.iter().max().unwrap() - counts.iter().min().unwrap();
                prop_assert!(spread <= 1, "{platform:?}/{kind}: {counts:?}");
            }
        }
        let again = allocate(&design, &prompts, &team, seed, "2018-09-17T00:00:00Z".parse().unwrap()).unwrap();
        prop_assert_eq!(again, out);
    }
}

#[test]
fn missing_stratum_is_an_error() {
    let design = AuditDesign::paper();
    let team = vec![Tester {
        tester_id: "only".into(),
        location_kind: "US".into(),
        platforms: vec![Platform::Facebook, Platform::Google],
        auth_token: None,
    }];
    let err = allocate(
        &design,
        &prompts(1, 1),
        &team,
        1,
        "2018-09-17T00:00:00Z".parse().unwrap(),
    )
    .unwrap_err();
    assert!(matches!(err, AllocationError::Coverage { .. }), "{err}");
}

#[test]
fn dropout_moves_open_work_to_eligible_testers() {
    let design = AuditDesign::paper();
    let team: Vec<Tester> = ["a", "b", "c"]
        .iter()
        .zip(["US", "US", "Non-US"])
        .map(|(id, kind)| Tester {
            tester_id: id.to_string(),
            location_kind: kind.into(),
            platforms: vec![Platform::Facebook, Platform::Google],
            auth_token: None,
        })
        .collect();
    let created = "2018-09-17T00:00:00Z".parse().unwrap();
    let out = allocate(&design, &prompts(2, 3), &team, 3, created).unwrap();
    let dropped: Vec<_> = out.iter().filter(|a| a.tester_id == "a").cloned().collect();
    assert!(!dropped.is_empty());
    let moved = reallocate_dropout(&dropped, &team, "a", 3, created).unwrap();
    assert_eq!(moved.len(), dropped.len());
    for (m, d) in moved.iter().zip(&dropped) {
        assert_eq!(m.tester_id, "b");
        assert_eq!(m.prompt_id, d.prompt_id);
        assert_eq!(m.retry_of.as_deref(), Some(d.assignment_id.as_str()));
        assert_ne!(m.assignment_id, d.assignment_id);
    }
}
