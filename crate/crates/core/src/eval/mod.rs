//! Cross-camera retrieval evaluation.
//!
//! Every held-out tracklet whose identity also appears in another camera is a
//! query. Its gallery is every held-out tracklet from the other cameras,
//! ranked by Euclidean distance between tracklet embeddings (the mean of the
//! tracklet's frame features). Gallery items of the query's own camera are
//! never ranked.

mod experiments;

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::world::{CameraId, IdentityId, TrackletId, TrackletRecord};

pub use experiments::{
    mean_rank1, run_ablation, run_robustness, write_ablation_csv, write_robustness_csv,
    AblationRow, ExperimentSetup, RobustnessRow,
};

/// Order gallery rows by ascending distance to `query`, ties by index.
pub fn rank_gallery(query: ArrayView1<'_, f64>, gallery: ArrayView2<'_, f64>) -> Result<Vec<usize>> {
    if gallery.nrows() == 0 {
        return Err(Error::InvalidInput("empty gallery".into()));
    }
    if gallery.ncols() != query.len() {
        return Err(Error::Dimension(format!(
            "query width {} vs gallery width {}",
            query.len(),
            gallery.ncols()
        )));
    }
    if query.iter().chain(gallery.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embeddings".into()));
    }
    let dist: Vec<f64> = gallery
        .rows()
        .into_iter()
        .map(|g| {
            g.iter()
                .zip(query.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .collect();
    let mut order: Vec<usize> = (0..gallery.nrows()).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(a.cmp(&b)));
    Ok(order)
}

/// Queries with at least one relevant item; the rest are dropped with a warning.
fn valid_queries(rankings: &[Vec<usize>], relevance: &[Vec<bool>]) -> Result<Vec<usize>> {
    if rankings.len() != relevance.len() {
        return Err(Error::Dimension(format!(
            "{} rankings for {} relevance lists",
            rankings.len(),
            relevance.len()
        )));
    }
    let mut keep = Vec::with_capacity(rankings.len());
    for (q, (r, rel)) in rankings.iter().zip(relevance).enumerate() {
        if r.len() != rel.len() || r.iter().any(|&g| g >= rel.len()) {
            return Err(Error::Dimension(format!("query {q}: ranking does not index its gallery")));
        }
        if rel.iter().any(|&x| x) {
            keep.push(q);
        } else {
            log::warn!("query {q} has no relevant gallery item; excluded");
        }
    }
    if keep.is_empty() {
        return Err(Error::InvalidInput("no query has a relevant gallery item".into()));
    }
    Ok(keep)
}

/// `cmc[k-1]` is the fraction of queries whose first relevant item is at
/// rank `<= k`. Length is the largest gallery size.
pub fn cmc(rankings: &[Vec<usize>], relevance: &[Vec<bool>]) -> Result<Vec<f64>> {
    let keep = valid_queries(rankings, relevance)?;
    let len = keep.iter().map(|&q| rankings[q].len()).max().unwrap_or(0);
    let mut hits = vec![0usize; len];
    for &q in &keep {
        let first = rankings[q]
            .iter()
            .position(|&g| relevance[q][g])
            .expect("valid query has a relevant item");
        hits[first] += 1;
    }
    let n = keep.len() as f64;
    let mut acc = 0;
    Ok(hits
        .into_iter()
        .map(|h| {
            acc += h;
            acc as f64 / n
        })
        .collect())
}

fn average_precision(ranking: &[usize], relevance: &[bool]) -> f64 {
    let mut found = 0usize;
    let mut sum = 0.0;
    for (pos, &g) in ranking.iter().enumerate() {
        if relevance[g] {
            found += 1;
            sum += found as f64 / (pos + 1) as f64;
        }
    }
    sum / found as f64
}

/// Mean over queries of average precision.
pub fn mean_average_precision(rankings: &[Vec<usize>], relevance: &[Vec<bool>]) -> Result<f64> {
    let keep = valid_queries(rankings, relevance)?;
    Ok(keep
        .iter()
        .map(|&q| average_precision(&rankings[q], &relevance[q]))
        .sum::<f64>()
        / keep.len() as f64)
}

/// Embedding of a whole tracklet: mean feature over all of its frames.
pub fn tracklet_embedding(params: &ModelParams, tracklet: &TrackletRecord) -> Result<Array1<f64>> {
    let f = params.embed(tracklet.frames.view())?;
    Ok(f.mean_axis(Axis(0)).expect("tracklet has frames"))
}

#[derive(Clone, Debug)]
pub struct EvalItem {
    pub camera: CameraId,
    pub identity: IdentityId,
    pub tracklet_id: TrackletId,
}

/// Held-out tracklets with their embeddings.
#[derive(Clone, Debug)]
pub struct RetrievalProtocol {
    pub items: Vec<EvalItem>,
    /// `items x D`
    pub embeddings: Array2<f64>,
}

impl RetrievalProtocol {
    pub fn new(items: Vec<EvalItem>, embeddings: Array2<f64>) -> Result<Self> {
        if items.len() != embeddings.nrows() {
            return Err(Error::Dimension(format!(
                "{} items for {} embeddings",
                items.len(),
                embeddings.nrows()
            )));
        }
        let mut seen = BTreeSet::new();
        for it in &items {
            if !seen.insert((it.camera, it.tracklet_id)) {
                return Err(Error::InvalidInput(format!(
                    "tracklet {} listed twice",
                    it.tracklet_id
                )));
            }
        }
        Ok(RetrievalProtocol { items, embeddings })
    }

    /// Embed each tracklet with `params`.
    pub fn embed<'a>(
        params: &ModelParams,
        tracklets: impl IntoIterator<Item = &'a TrackletRecord>,
    ) -> Result<Self> {
        let tracklets: Vec<&TrackletRecord> = tracklets.into_iter().collect();
        let d = params.feature_dim();
        let mut embeddings = Array2::zeros((tracklets.len(), d));
        let mut items = Vec::with_capacity(tracklets.len());
        for (i, t) in tracklets.iter().enumerate() {
            embeddings.row_mut(i).assign(&tracklet_embedding(params, t)?);
            items.push(EvalItem {
                camera: t.camera_id,
                identity: t.identity_id,
                tracklet_id: t.tracklet_id,
            });
        }
        Self::new(items, embeddings)
    }

    /// Items whose identity is also seen by another camera.
    pub fn queries(&self) -> Vec<usize> {
        let mut cams: BTreeMap<IdentityId, BTreeSet<CameraId>> = BTreeMap::new();
        for it in &self.items {
            cams.entry(it.identity).or_default().insert(it.camera);
        }
        (0..self.items.len())
            .filter(|&i| cams[&self.items[i].identity].len() >= 2)
            .collect()
    }

    /// Gallery of a query: every item from another camera.
    pub fn gallery(&self, query: usize) -> Vec<usize> {
        let cam = self.items[query].camera;
        (0..self.items.len())
            .filter(|&g| self.items[g].camera != cam)
            .collect()
    }

    /// Rankings and relevance lists for every query.
    pub fn rank_all(&self) -> Result<(Vec<Vec<usize>>, Vec<Vec<bool>>)> {
        let queries = self.queries();
        let mut rankings = Vec::with_capacity(queries.len());
        let mut relevance = Vec::with_capacity(queries.len());
        for q in queries {
            let gallery = self.gallery(q);
            let g_emb = self.embeddings.select(Axis(0), &gallery);
            rankings.push(rank_gallery(self.embeddings.row(q), g_emb.view())?);
            relevance.push(
                gallery
                    .iter()
                    .map(|&g| self.items[g].identity == self.items[q].identity)
                    .collect(),
            );
        }
        Ok((rankings, relevance))
    }

    pub fn evaluate(&self, meta: EvalMeta) -> Result<EvalResult> {
        let (rankings, relevance) = self.rank_all()?;
        let curve = cmc(&rankings, &relevance)?;
        let map = mean_average_precision(&rankings, &relevance)?;
        let gallery_sizes: Vec<usize> = rankings.iter().map(Vec::len).collect();
        Ok(EvalResult {
            cmc: curve,
            map,
            num_queries: rankings.len(),
            mean_gallery_size: gallery_sizes.iter().sum::<usize>() as f64
                / gallery_sizes.len().max(1) as f64,
            chance_rank1: relevance
                .iter()
                .map(|r| r.iter().filter(|&&x| x).count() as f64 / r.len() as f64)
                .sum::<f64>()
                / relevance.len().max(1) as f64,
            meta,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMeta {
    pub seed: Option<u64>,
    pub mode: Option<String>,
    pub duplication_rate: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Rank-k accuracy, `cmc[k-1]`, fractions in `[0, 1]`.
    pub cmc: Vec<f64>,
    pub map: f64,
    pub num_queries: usize,
    pub mean_gallery_size: f64,
    /// Expected Rank-1 of a random ranking.
    pub chance_rank1: f64,
    pub meta: EvalMeta,
}

impl EvalResult {
    /// Rank-k accuracy; galleries shorter than `k` count as saturated.
    pub fn rank(&self, k: usize) -> f64 {
        if self.cmc.is_empty() || k == 0 {
            return 0.0;
        }
        self.cmc[(k - 1).min(self.cmc.len() - 1)]
    }

    pub fn rank1(&self) -> f64 {
        self.rank(1)
    }
}

/// Embed the held-out tracklets with `params` and score them.
pub fn evaluate<'a>(
    params: &ModelParams,
    test_tracklets: impl IntoIterator<Item = &'a TrackletRecord>,
    meta: EvalMeta,
) -> Result<EvalResult> {
    RetrievalProtocol::embed(params, test_tracklets)?.evaluate(meta)
}

/// Result table in the column layout `mode/rate, seed, rank1, rank5, rank10,
/// rank20, map`; accuracies in percent with four decimals.
pub fn write_results_csv<W: std::io::Write>(
    w: W,
    key_column: &str,
    rows: &[(String, Option<u64>, &EvalResult)],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([key_column, "seed", "rank1", "rank5", "rank10", "rank20", "map"])?;
    let pct = |v: f64| format!("{:.4}", 100.0 * v);
    for (key, seed, r) in rows {
        wtr.write_record([
            key.clone(),
            seed.map_or_else(String::new, |s| s.to_string()),
            pct(r.rank(1)),
            pct(r.rank(5)),
            pct(r.rank(10)),
            pct(r.rank(20)),
            pct(r.map),
        ])?;
    }
    wtr.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}

/// `rank,cmc` rows, one per gallery rank.
pub fn write_cmc_csv<W: std::io::Write>(w: W, result: &EvalResult) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["rank", "cmc"])?;
    for (k, v) in result.cmc.iter().enumerate() {
        wtr.write_record([(k + 1).to_string(), format!("{v:.6}")])?;
    }
    wtr.flush().map_err(|e| Error::Io {
        path: "<csv>".into(),
        source: e,
    })
}

#[cfg(test)]
mod tests;
