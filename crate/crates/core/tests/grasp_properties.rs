use neuromanip::grasp::{context_to_grasps, restrict_classify, CandidateSet, GraspLibrary};
use neuromanip::scene::{Aabb, ObjectClass, SceneObject, Vec3};
use neuromanip::signal::GestureLabel;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn object(class_label: ObjectClass, grasp_size_m: f64) -> SceneObject {
    SceneObject {
        id: 1,
        class_label,
        aabb: Aabb { min: Vec3::new(0.0, 0.0, 0.5), max: Vec3::new(0.1, 0.1, 0.6) },
        yaw: 0.0,
        grasp_size_m,
    }
}

fn random_candidates(rng: &mut ChaCha8Rng, lib: &GraspLibrary) -> Option<CandidateSet> {
    let class = ObjectClass::ALL[rng.random_range(0..ObjectClass::ALL.len())];
    context_to_grasps(&object(class, rng.random_range(0.0..0.2)), lib).ok()
}

#[test]
fn restriction_fuzz_million_cases() {
    let lib = GraspLibrary::default_library();
    let map = lib.label_map();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut cases = 0usize;
    while cases < 1_000_000 {
        let Some(c) = random_candidates(&mut rng, &lib) else { continue };
        let mut allowed = c.labels(&map);
        allowed.sort();
        allowed.dedup();
        for _ in 0..100 {
            let logits: Vec<f64> = (0..6).map(|_| rng.random_range(-5.0..5.0)).collect();
            match restrict_classify(&logits, &c, &map) {
                Ok((label, conf)) => {
                    assert!(allowed.contains(&label));
                    assert!(allowed.iter().all(|g| logits[g.index()] <= logits[label.index()]));
                    assert!(conf > 0.0 && conf <= 1.0);
                    let truth_argmax = (0..6).max_by(|a, b| logits[*a].total_cmp(&logits[*b])).unwrap();
                    if allowed.contains(&GestureLabel::ALL[truth_argmax]) {
                        assert_eq!(label.index(), truth_argmax, "restriction must keep a correct in-set winner");
                    }
                }
                Err(_) => assert!(allowed.is_empty()),
            }
            cases += 1;
        }
    }
}

#[test]
fn candidate_sets_are_bounded_normalized_and_sorted() {
    let lib = GraspLibrary::default_library();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..20_000 {
        let Some(c) = random_candidates(&mut rng, &lib) else { continue };
        assert!(!c.is_empty() && c.len() <= lib.k_max);
        assert!((c.entries.iter().map(|e| e.score).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(c.entries.windows(2).all(|w| w[0].score >= w[1].score));
    }
}

proptest! {
    #[test]
    fn uniform_prior_scaling_leaves_candidates_unchanged(
        scale in 0.05f64..1.0,
        class_idx in 0usize..6,
        size in 0.0f64..0.2,
    ) {
        let lib = GraspLibrary::default_library();
        let mut scaled = lib.clone();
        for p in &mut scaled.patterns {
            p.prior *= scale;
        }
        let o = object(ObjectClass::ALL[class_idx], size);
        match (context_to_grasps(&o, &lib), context_to_grasps(&o, &scaled)) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(a.entries.len(), b.entries.len());
                for (x, y) in a.entries.iter().zip(&b.entries) {
                    prop_assert_eq!(x.pattern_id, y.pattern_id);
                    prop_assert!((x.score - y.score).abs() < 1e-12);
                }
            }
            (Err(_), Err(_)) => {}
            (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
        }
    }

    #[test]
    fn larger_k_never_drops_a_candidate(class_idx in 0usize..6, size in 0.0f64..0.2, k in 1usize..6) {
        let small = GraspLibrary::default_library().with_k_max(k).unwrap();
        let large = GraspLibrary::default_library().with_k_max(k + 1).unwrap();
        let o = object(ObjectClass::ALL[class_idx], size);
        if let (Ok(a), Ok(b)) = (context_to_grasps(&o, &small), context_to_grasps(&o, &large)) {
            prop_assert!(a.entries.iter().all(|e| b.contains_pattern(e.pattern_id)));
        }
    }
}
