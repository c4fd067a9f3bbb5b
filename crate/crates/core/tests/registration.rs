use fracmetrics_core::geom::{Mesh, RigidTransform};
use fracmetrics_core::registration::{recover_fragment_transforms, FragmentMatch, RegistrationParams};
use fracmetrics_core::synth::{make_band_case, make_displaced_case, preset, random_rigid};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn errors(est: &RigidTransform, truth: &RigidTransform) -> (f64, f64) {
    let diff = est.compose(&truth.inverse());
    (diff.rotation_angle().to_degrees(), (est.translation() - truth.translation()).norm())
}

#[test]
fn recovers_random_displacements_of_synthetic_fragments() {
    let base = make_band_case(&preset("band-30-50-step", 2).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..3 {
        let transforms: Vec<RigidTransform> =
            base.fragments.iter().map(|_| random_rigid(&mut rng, 30.0, 20.0)).collect();
        let moved = make_displaced_case(&base, &transforms).unwrap();
        let matches: Vec<FragmentMatch> = base
            .fragments
            .iter()
            .zip(&moved.fragments)
            .map(|(a, b)| FragmentMatch {
                fragment_id: a.id.clone(),
                original: a.mesh.clone(),
                reduced: b.mesh.clone(),
                seed_transform: None,
            })
            .collect();
        let results = recover_fragment_transforms(&matches, &RegistrationParams::default());
        assert_eq!(results.len(), 2);
        for (r, truth) in results.iter().zip(&moved.ground_truth.transforms) {
            let res = r.result.as_ref().unwrap();
            let (rot, trans) = errors(&res.transform, truth);
            assert!(rot < 1e-6 && trans < 1e-6, "{}: {rot} deg, {trans} mm", r.fragment_id);
            assert!(res.converged);
            assert!(res.rms < 1e-6);
        }
    }
}

#[test]
fn seed_transform_is_used_as_the_start() {
    let base = make_band_case(&preset("band-30-50-step", 2).unwrap()).unwrap();
    let truth = RigidTransform::from_axis_angle([0.3, 1.0, -0.2].into(), 0.4)
        .unwrap()
        .with_translation([5.0, -3.0, 8.0].into());
    let frag = &base.fragments[1];
    let m = FragmentMatch {
        fragment_id: frag.id.clone(),
        original: frag.mesh.clone(),
        reduced: frag.mesh.transformed(&truth),
        seed_transform: Some(truth),
    };
    let res = &recover_fragment_transforms(&[m], &RegistrationParams::default())[0];
    let res = res.result.as_ref().unwrap();
    let (rot, trans) = errors(&res.transform, &truth);
    assert!(rot < 1e-9 && trans < 1e-9);
    assert!(res.iterations <= 2);
}

#[test]
fn empty_fragment_fails_without_affecting_others() {
    let base = make_band_case(&preset("band-30-50-step", 2).unwrap()).unwrap();
    let good = &base.fragments[0];
    let m = FragmentMatch {
        fragment_id: "empty".into(),
        original: good.mesh.clone(),
        reduced: Mesh::new(vec![], vec![]).unwrap(),
        seed_transform: None,
    };
    let ok = FragmentMatch {
        fragment_id: good.id.clone(),
        original: good.mesh.clone(),
        reduced: good.mesh.clone(),
        seed_transform: None,
    };
    let results = recover_fragment_transforms(&[ok, m], &RegistrationParams::default());
    assert!(results[0].result.is_ok());
    assert_eq!(results[1].fragment_id, "empty");
    assert!(results[1].result.is_err());
}
