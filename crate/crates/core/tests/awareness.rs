mod common;

use coda4dgs_core::awareness::{aggregate_awareness, time_embedding, Awareness, Dcn, DcnConfig};
use coda4dgs_core::deform::DEFORM_DIM;
use coda4dgs_core::numeric::grad_check_fn;
use coda4dgs_core::scene::GaussianScene;
use common::{flatten, random_scene, rng, unflatten};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn time_embedding_at_zero_is_zero() {
    for d in [2, 8, 64] {
        assert!(time_embedding(0.0f64, d).iter().all(|&v| v == 0.0));
    }
}

#[test]
fn time_embedding_first_entry_at_one() {
    let e = time_embedding(1.0f64, 64);
    assert!((e[0] - 0.841_470_984_8).abs() < 1e-10);
    // entry i uses wavelength 10000^(2i/d)
    let i = 5;
    assert!((e[i] - (1.0 / 10000f64.powf(2.0 * i as f64 / 64.0)).sin()).abs() < 1e-15);
}

proptest! {
    #[test]
    fn time_embedding_is_bounded(tau in 0u32..100_000, half in 1usize..40) {
        let e = time_embedding(tau as f64, 2 * half);
        prop_assert_eq!(e.len(), 2 * half);
        prop_assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
    }
}

#[test]
fn aggregate_concatenates_in_order() {
    let a = aggregate_awareness(&[1.0; 64], &[2.0; 10], &[3.0; 16], (64, 16)).unwrap();
    assert_eq!(a.len(), 90);
    assert_eq!(a[63], 1.0);
    assert_eq!(a[64], 2.0);
    assert_eq!(a[74], 3.0);
    let z = aggregate_awareness(&[0.0; 4], &[0.0; 10], &[0.0; 2], (4, 2)).unwrap();
    assert!(z.iter().all(|&v| v == 0.0));
    assert!(aggregate_awareness(&[0.0; 4], &[0.0; 9], &[0.0; 2], (4, 2)).is_err());
}

fn small_dcn(seed: u64, f: usize) -> Dcn<f64> {
    Dcn::new(&DcnConfig { embed_dim: 6, hidden: 7, awareness: Awareness::default() }, f, &mut rng(seed)).unwrap()
}

#[test]
fn fresh_dcn_is_identity() {
    let mut r = rng(1);
    let dcn = Dcn::<f64>::new(&DcnConfig::default(), 4, &mut r).unwrap();
    let s = random_scene(&mut r, 30, 4, 1.0);
    let f_def: Vec<f64> = (0..30 * DEFORM_DIM).map(|_| r.gen_range(-1.0..1.0)).collect();
    let (out, trace) = dcn.compensate(&s, &time_embedding(7.0, 64), &f_def).unwrap();
    assert_eq!(out, s);
    assert!(trace.phi_s.output().iter().all(|&m| m > 0.0 && m < 1.0));
}

#[test]
fn block_names_match_checkpoint_layout() {
    let dcn = small_dcn(2, 3);
    let names: Vec<&str> = dcn.params().iter().map(|p| p.name.as_str()).collect();
    assert_eq!(names, ["dcn/phi_p/layer0", "dcn/phi_p/layer1", "dcn/phi_p/layer2", "dcn/phi_s/linear"]);
}

fn randomize(dcn: &mut Dcn<f64>, r: &mut impl Rng) {
    for p in dcn.params_mut() {
        let stride = p.shape[1];
        for (j, v) in p.values.iter_mut().enumerate() {
            *v = if j % stride == stride - 1 {
                let b = r.gen_range(0.2..0.6);
                if r.gen_bool(0.5) {
                    b
                } else {
                    -b
                }
            } else {
                r.gen_range(-0.7..0.7)
            };
        }
    }
}

#[test]
fn compensation_is_bounded_by_residual_channel() {
    let mut r = rng(3);
    let mut dcn = small_dcn(3, 3);
    randomize(&mut dcn, &mut r);
    let s = random_scene(&mut r, 12, 3, 1.0);
    let f_def: Vec<f64> = (0..12 * DEFORM_DIM).map(|_| r.gen_range(-1.0..1.0)).collect();
    let (out, trace) = dcn.compensate(&s, &time_embedding(2.0, 6), &f_def).unwrap();
    let comp = Dcn::compensation(&trace);
    for (c, p) in comp.iter().zip(trace.phi_p.output()) {
        assert!(c.abs() <= p.abs());
    }
    assert_eq!(out.opacity_logits, s.opacity_logits);
    assert_eq!(out.sh, s.sh);
    assert_eq!(out.features, s.features);
}

#[test]
fn compensation_is_equivariant_under_reordering() {
    let mut r = rng(4);
    let mut dcn = small_dcn(4, 2);
    randomize(&mut dcn, &mut r);
    let s = random_scene(&mut r, 9, 2, 1.0);
    let f_def: Vec<f64> = (0..9 * DEFORM_DIM).map(|_| r.gen_range(-1.0..1.0)).collect();
    let perm = [4usize, 0, 8, 2, 7, 1, 3, 6, 5];
    let s2 = s.select(&perm);
    let f_def2: Vec<f64> = perm.iter().flat_map(|&i| f_def[i * 10..i * 10 + 10].to_vec()).collect();
    let ft = time_embedding(3.0, 6);
    let (a, _) = dcn.compensate(&s, &ft, &f_def).unwrap();
    let (b, _) = dcn.compensate(&s2, &ft, &f_def2).unwrap();
    assert_eq!(a.select(&perm), b);
}

#[test]
fn gradients_match_finite_differences() {
    let mut r = rng(5);
    for seed in 0..20 {
        for awareness in [Awareness::default(), Awareness { time: true, deformation: false, context: false }] {
            let mut dcn = small_dcn(seed, 3);
            dcn.awareness = awareness;
            randomize(&mut dcn, &mut r);
            let n = 4;
            let s = random_scene(&mut r, n, 3, 1.0);
            let f_def: Vec<f64> = (0..n * DEFORM_DIM).map(|_| r.gen_range(-1.0..1.0)).collect();
            let ft = time_embedding(r.gen_range(0.0..20.0), 6);
            let w = random_scene(&mut r, n, 3, 1.0);
            let wf = flatten(&w);
            let obj = |d: &Dcn<f64>, s: &GaussianScene<f64>, fd: &[f64]| {
                let (o, _) = d.compensate(s, &ft, fd).unwrap();
                flatten(&o).iter().zip(&wf).map(|(a, b)| a * b).sum::<f64>()
            };
            let (_, trace) = dcn.compensate(&s, &ft, &f_def).unwrap();
            let mut d_scene = GaussianScene::zeros_like(&s);
            let mut d_fdef = vec![0.0; n * DEFORM_DIM];
            let mut g = dcn.clone();
            g.backward(&trace, &w, &mut d_scene, &mut d_fdef);
            let analytic: Vec<f64> = g.params().iter().flat_map(|p| p.grad.clone()).collect();
            let point: Vec<f64> = dcn.params().iter().flat_map(|p| p.values.clone()).collect();
            let fp = |x: &[f64]| {
                let mut d = dcn.clone();
                let mut at = 0;
                for p in d.params_mut() {
                    let k = p.values.len();
                    p.values.copy_from_slice(&x[at..at + k]);
                    at += k;
                }
                obj(&d, &s, &f_def)
            };
            assert!(grad_check_fn(fp, &analytic, &point, 1e-5).unwrap() < 1e-4);
            let fs = |x: &[f64]| obj(&dcn, &unflatten(&s, x), &f_def);
            assert!(grad_check_fn(fs, &flatten(&d_scene), &flatten(&s), 1e-5).unwrap() < 1e-4);
            let fd = |x: &[f64]| obj(&dcn, &s, x);
            assert!(grad_check_fn(fd, &d_fdef, &f_def, 1e-5).unwrap() < 1e-4);
        }
    }
}
