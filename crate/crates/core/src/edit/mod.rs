//! Object-level scene editing: segmentation by feature similarity,
//! extraction, rigid placement and merging of trained scenes.

pub mod pca;
pub mod script;

pub use pca::pca_image;
pub use script::{read_vector, run_script, EditOp, EditScript, Query};

use crate::error::{Error, Result};
use crate::train::{Model, Rigid};

/// Ids of Gaussians whose normalized feature has cosine at least
/// `threshold` with `query`, reduced to the largest spatial cluster.
///
/// Clusters are single-linkage components over canonical positions with
/// link radius twice the median Gaussian scale (mean of the three axes).
/// Equal-sized clusters resolve to the one holding the lowest id.
pub fn segment(model: &Model, query: &[f64], threshold: f64) -> Result<Vec<usize>> {
    let scene = &model.scene;
    if query.len() != scene.feature_dim {
        return Err(Error::Edit(format!("query has width {}, scene features have {}", query.len(), scene.feature_dim)));
    }
    if !(-1.0..=1.0).contains(&threshold) {
        return Err(Error::Edit(format!("cosine threshold {threshold} outside [-1, 1]")));
    }
    let qn = query.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(qn > 0.0) {
        return Ok(Vec::new());
    }
    let candidates: Vec<usize> = (0..scene.len())
        .filter(|&i| {
            let f = scene.normalized_feature(i);
            let cos: f64 = f.iter().zip(query).map(|(a, b)| a * b).sum::<f64>() / qn;
            cos >= threshold
        })
        .collect();
    if candidates.is_empty() {
        return Ok(candidates);
    }
    let radius = 2.0 * median_scale(model);
    let mut parent: Vec<usize> = (0..candidates.len()).collect();
    fn root(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let r2 = radius * radius;
    for a in 0..candidates.len() {
        let pa = scene.positions[candidates[a]];
        for b in a + 1..candidates.len() {
            let pb = scene.positions[candidates[b]];
            let d2: f64 = (0..3).map(|k| (pa[k] - pb[k]).powi(2)).sum();
            if d2 <= r2 {
                let (ra, rb) = (root(&mut parent, a), root(&mut parent, b));
                if ra != rb {
                    parent[ra.max(rb)] = ra.min(rb);
                }
            }
        }
    }
    let mut size = vec![0usize; candidates.len()];
    for i in 0..candidates.len() {
        let r = root(&mut parent, i);
        size[r] += 1;
    }
    // roots are the lowest member of their cluster, so the first maximum
    // is the cluster holding the lowest id
    let best = (0..candidates.len()).max_by(|&a, &b| size[a].cmp(&size[b]).then(b.cmp(&a))).unwrap();
    Ok((0..candidates.len()).filter(|&i| root(&mut parent, i) == best).map(|i| candidates[i]).collect())
}

/// Median over Gaussians of the mean of the three axis scales.
pub fn median_scale(model: &Model) -> f64 {
    let mut s: Vec<f64> = (0..model.scene.len()).map(|i| model.scene.scale(i).iter().sum::<f64>() / 3.0).collect();
    if s.is_empty() {
        return 0.0;
    }
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// The listed Gaussians (in the given order) with their features and field
/// tags; every motion is kept.
pub fn extract(model: &Model, ids: &[usize]) -> Result<Model> {
    if let Some(&bad) = ids.iter().find(|&&i| i >= model.scene.len()) {
        return Err(Error::Edit(format!("Gaussian id {bad} out of range (scene has {})", model.scene.len())));
    }
    Ok(Model {
        scene: model.scene.select(ids),
        field_ids: ids.iter().map(|&i| model.field_ids[i]).collect(),
        motions: model.motions.clone(),
    })
}

/// Everything except the listed Gaussians, in original order.
pub fn complement(model: &Model, ids: &[usize]) -> Result<Model> {
    let mut keep = vec![true; model.scene.len()];
    for &i in ids {
        *keep
            .get_mut(i)
            .ok_or_else(|| Error::Edit(format!("Gaussian id {i} out of range (scene has {})", model.scene.len())))? = false;
    }
    let rest: Vec<usize> = (0..keep.len()).filter(|&i| keep[i]).collect();
    extract(model, &rest)
}

/// Places the whole model by `rigid`, after any placement it already has,
/// at every time.
pub fn transform(model: &Model, rigid: &Rigid) -> Model {
    let mut out = model.clone();
    for m in &mut out.motions {
        m.rigid = Some(match &m.rigid {
            None => *rigid,
            Some(prev) => rigid.after(prev),
        });
    }
    out
}

/// Union of two models. Each part keeps deforming under its own motions;
/// the motions of `b` are appended after those of `a`.
pub fn merge(a: &Model, b: &Model) -> Result<Model> {
    if a.feature_dim() != b.feature_dim() {
        return Err(Error::Edit(format!("cannot merge scenes with feature widths {} and {}", a.feature_dim(), b.feature_dim())));
    }
    let offset = a.motions.len();
    let mut field_ids = a.field_ids.clone();
    field_ids.extend(b.field_ids.iter().map(|&id| id + offset));
    let mut motions = a.motions.clone();
    motions.extend(b.motions.iter().cloned());
    let model = Model { scene: a.scene.concat(&b.scene)?, field_ids, motions };
    model.validate()?;
    Ok(model)
}
