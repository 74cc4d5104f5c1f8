//! Synthetic benchmark: toy catalogs and networks, data generation at a fixed
//! SNR, catalog corruption, ROC/AUC scoring and the CFA-CAR versus EFA study.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geneset::{GeneSet, GeneSetCollection};
use crate::inference::pooled_theta_post;
use crate::linalg;
use crate::model::car::FactorCov;
use crate::model::{align, ExpressionDataset, Hyperparameters, LoadingMask, Model, SampleInfo};
use crate::network::{build_network, gamma_support, PathwayNetwork, DEFAULT_JACCARD_THRESHOLD};
use crate::sampler::{run_chain, SamplerConfig};

/// RNG for a named purpose within a seeded run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Shape of a generated pathway catalog and its functional annotation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSpec {
    pub n_pathways: usize,
    pub n_genes: usize,
    /// Pathways are grouped into modules; functions mostly span one module.
    pub n_modules: usize,
    /// Probability that a gene joins a second pathway.
    pub overlap: f64,
    /// Function sets per module, on top of one specific set per pathway.
    pub functions_per_module: usize,
    /// Cross-module function sets.
    pub bridges: usize,
    pub jaccard_threshold: f64,
    pub seed: u64,
}

impl Default for CatalogSpec {
    fn default() -> Self {
        Self {
            n_pathways: 10,
            n_genes: 300,
            n_modules: 3,
            overlap: 0.15,
            functions_per_module: 4,
            bridges: 2,
            jaccard_threshold: DEFAULT_JACCARD_THRESHOLD,
            seed: 7,
        }
    }
}

/// Pathway catalog, function catalog and the network built from them.
#[derive(Clone, Debug)]
pub struct SyntheticCatalog {
    pub pathways: GeneSetCollection,
    pub functions: GeneSetCollection,
    pub net: PathwayNetwork,
    pub jaccard_threshold: f64,
}

fn sample_subset<R: Rng + ?Sized>(pool: &[String], frac: f64, rng: &mut R) -> BTreeSet<String> {
    let k = ((pool.len() as f64 * frac).round() as usize).clamp(1, pool.len());
    pool.choose_multiple(rng, k).cloned().collect()
}

pub fn synthetic_catalog(spec: &CatalogSpec) -> Result<SyntheticCatalog> {
    if spec.n_pathways < 2 || spec.n_modules == 0 || spec.n_genes < spec.n_pathways {
        return Err(Error::invalid(
            "catalog needs ≥ 2 pathways, ≥ 1 module and a gene per pathway",
        ));
    }
    let mut rng = stream_rng(spec.seed, 0);
    let q = spec.n_pathways;
    let module_of = |j: usize| j % spec.n_modules;
    let mut members: Vec<BTreeSet<String>> = vec![BTreeSet::new(); q];
    for g in 0..spec.n_genes {
        let name = format!("G{g:04}");
        // every pathway gets at least one gene
        let j = if g < q { g } else { rng.random_range(0..q) };
        members[j].insert(name.clone());
        if rng.random::<f64>() < spec.overlap {
            let mates: Vec<usize> = (0..q).filter(|&i| i != j && module_of(i) == module_of(j)).collect();
            let pool: Vec<usize> = if mates.is_empty() {
                (0..q).filter(|&i| i != j).collect()
            } else {
                mates
            };
            members[*pool.choose(&mut rng).expect("q ≥ 2")].insert(name);
        }
    }
    let pathways = GeneSetCollection::new(
        members
            .iter()
            .enumerate()
            .map(|(j, g)| GeneSet {
                id: format!("P{j:02}"),
                description: format!("module {}", module_of(j)),
                genes: g.clone(),
            })
            .collect(),
    )?;

    let pools: Vec<Vec<String>> = members.iter().map(|s| s.iter().cloned().collect()).collect();
    let mut functions = Vec::new();
    for (j, pool) in pools.iter().enumerate() {
        functions.push((format!("F_own_{j:02}"), sample_subset(pool, 0.5, &mut rng)));
    }
    for m in 0..spec.n_modules {
        let in_mod: Vec<usize> = (0..q).filter(|&j| module_of(j) == m).collect();
        for f in 0..spec.functions_per_module {
            let k = rng.random_range(1..=in_mod.len().min(3));
            let mut genes = BTreeSet::new();
            for &j in in_mod.choose_multiple(&mut rng, k) {
                genes.extend(sample_subset(&pools[j], 0.3, &mut rng));
            }
            functions.push((format!("F_m{m}_{f}"), genes));
        }
    }
    for b in 0..spec.bridges {
        let picks: Vec<usize> = (0..q)
            .collect::<Vec<_>>()
            .choose_multiple(&mut rng, 2)
            .copied()
            .collect();
        let mut genes = BTreeSet::new();
        for j in picks {
            genes.extend(sample_subset(&pools[j], 0.2, &mut rng));
        }
        functions.push((format!("F_bridge_{b}"), genes));
    }
    let functions = GeneSetCollection::new(
        functions
            .into_iter()
            .map(|(id, genes)| GeneSet {
                id,
                description: String::new(),
                genes,
            })
            .collect(),
    )?;
    let net = build_network(&pathways, &functions, spec.jaccard_threshold)?;
    Ok(SyntheticCatalog {
        pathways,
        functions,
        net,
        jaccard_threshold: spec.jaccard_threshold,
    })
}

/// Parameters of one simulated data set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimScenario {
    pub snr: f64,
    pub n_case_experiments: usize,
    pub replicates: usize,
    pub n_controls: usize,
    /// True γ as a fraction of the upper end of the support.
    pub gamma_fraction: f64,
    pub lambda_var: f64,
    pub psi: f64,
    pub sigma2: f64,
    pub seed: u64,
}

impl Default for SimScenario {
    fn default() -> Self {
        Self {
            snr: 3.5,
            n_case_experiments: 10,
            replicates: 5,
            n_controls: 50,
            gamma_fraction: 0.9,
            lambda_var: 0.1,
            psi: 1.0,
            sigma2: 1.0,
            seed: 11,
        }
    }
}

/// Simulated data with the truth it was generated from.
#[derive(Clone, Debug)]
pub struct SimData {
    pub data: ExpressionDataset,
    /// Pathway ids in the row order of `truth`.
    pub pathway_ids: Vec<String>,
    /// `q × E` true indicators, columns in the dataset's experiment order.
    pub truth: DMatrix<bool>,
    pub gamma_true: f64,
    pub lambda: DMatrix<f64>,
}

/// Draws one data set on the catalog's network and gene-to-pathway mask.
/// Each case experiment perturbs one pathway (ρ = SNR on all its replicates).
pub fn generate_dataset(cat: &SyntheticCatalog, sc: &SimScenario) -> Result<SimData> {
    if sc.snr < 0.0 || sc.replicates == 0 || sc.n_controls == 0 {
        return Err(Error::invalid(
            "scenario needs snr ≥ 0, replicates ≥ 1 and controls ≥ 1",
        ));
    }
    let net = &cat.net;
    let q = net.len();
    let mut rng = stream_rng(sc.seed, 1);
    let genes: Vec<String> = cat.pathways.all_genes().into_iter().collect();
    let index: BTreeMap<&str, usize> = net
        .pathway_ids
        .iter()
        .enumerate()
        .map(|(j, s)| (s.as_str(), j))
        .collect();
    let mut lambda = DMatrix::zeros(genes.len(), q);
    let lam = Normal::new(0.0, sc.lambda_var.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let memberships = cat.pathways.memberships();
    for (k, g) in genes.iter().enumerate() {
        for &s in &memberships[g] {
            if let Some(&j) = index.get(cat.pathways.sets()[s].id.as_str()) {
                lambda[(k, j)] = lam.sample(&mut rng);
            }
        }
    }

    let support = gamma_support(net, Hyperparameters::default().delta_gamma);
    let gamma_true = if support.is_degenerate() {
        0.0
    } else {
        sc.gamma_fraction * support.hi
    };
    let factor = FactorCov::new(net, gamma_true, 1.0)?;
    let cov_factor = linalg::lower_factor(&(&factor.phi * sc.sigma2), "Φ")?;

    let mut order: Vec<usize> = (0..q).collect();
    order.shuffle(&mut rng);
    let mut samples = Vec::new();
    let mut rho_cols: Vec<DVector<f64>> = Vec::new();
    for e in 0..sc.n_case_experiments {
        let target = order[e % q];
        for r in 0..sc.replicates {
            samples.push(SampleInfo {
                sample_id: format!("case{e:02}_r{r}"),
                experiment_id: format!("case{e:02}"),
                replicate_index: r,
                is_control: false,
            });
            let mut rho = DVector::zeros(q);
            rho[target] = sc.snr;
            rho_cols.push(rho);
        }
    }
    for c in 0..sc.n_controls {
        samples.push(SampleInfo {
            sample_id: format!("ctl{c:02}"),
            experiment_id: "control".into(),
            replicate_index: c,
            is_control: true,
        });
        rho_cols.push(DVector::zeros(q));
    }

    let n = samples.len();
    let noise = Normal::new(0.0, sc.psi.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    let mut y = DMatrix::zeros(genes.len(), n);
    for (c, rho) in rho_cols.iter().enumerate() {
        let omega = linalg::sample_with_cov_factor(&(&factor.phi * rho), &cov_factor, &mut rng);
        let col = &lambda * omega;
        for k in 0..genes.len() {
            y[(k, c)] = col[k] + noise.sample(&mut rng);
        }
    }
    let data = ExpressionDataset::new(genes, y, samples)?;
    let mut truth = DMatrix::from_element(q, data.n_experiments(), false);
    for (e, ex) in data.experiments().iter().enumerate() {
        if let Some(&c) = ex.columns.first() {
            for j in 0..q {
                truth[(j, e)] = rho_cols[c][j] != 0.0;
            }
        }
    }
    // snr = 0 leaves nothing perturbed, but the design still names one target per case
    if sc.snr == 0.0 {
        for (e, ex) in data.experiments().iter().enumerate() {
            if !ex.is_control {
                let idx: usize = ex.id.trim_start_matches("case").parse().unwrap_or(0);
                truth[(order[idx % q], e)] = true;
            }
        }
    }
    Ok(SimData {
        data,
        pathway_ids: net.pathway_ids.clone(),
        truth,
        gamma_true,
        lambda,
    })
}

/// Moves `round(fraction · n_genes)` genes, chosen uniformly, out of all their
/// pathways and into one uniformly chosen pathway they did not belong to.
pub fn corrupt_catalog(catalog: &GeneSetCollection, fraction: f64, seed: u64) -> Result<(GeneSetCollection, usize)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::invalid(format!("corruption fraction {fraction} outside [0, 1]")));
    }
    let q = catalog.len();
    let genes: Vec<String> = catalog.all_genes().into_iter().collect();
    let n_move = (fraction * genes.len() as f64).round() as usize;
    if n_move == 0 {
        return Ok((catalog.clone(), 0));
    }
    if q < 2 {
        return Err(Error::invalid("corruption needs at least two pathways"));
    }
    let mut rng = stream_rng(seed, 2);
    let mut sets: Vec<BTreeSet<String>> = catalog.sets().iter().map(|s| s.genes.clone()).collect();
    let moved: Vec<String> = genes.choose_multiple(&mut rng, n_move).cloned().collect();
    let mut placements = Vec::with_capacity(moved.len());
    for g in &moved {
        let old: Vec<usize> = (0..q).filter(|&j| sets[j].contains(g)).collect();
        let others: Vec<usize> = (0..q).filter(|j| !old.contains(j)).collect();
        let target = if others.is_empty() {
            old[0]
        } else {
            *others.choose(&mut rng).expect("non-empty")
        };
        placements.push((g.clone(), old, target));
    }
    for (g, old, _) in &placements {
        for &j in old {
            sets[j].remove(g);
        }
    }
    for (g, _, target) in &placements {
        sets[*target].insert(g.clone());
    }
    // a pathway emptied by the moves keeps one of the moved genes as well
    for j in 0..q {
        if sets[j].is_empty() {
            let g = moved.choose(&mut rng).expect("n_move > 0").clone();
            sets[j].insert(g);
        }
    }
    let out = GeneSetCollection::new(
        catalog
            .sets()
            .iter()
            .zip(sets)
            .map(|(s, genes)| GeneSet {
                id: s.id.clone(),
                description: s.description.clone(),
                genes,
            })
            .collect(),
    )?;
    Ok((out, n_move))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// `(fpr, tpr)` from the strictest threshold to the loosest.
    pub points: Vec<(f64, f64)>,
    /// None when the truth has no positives or no negatives.
    pub auc: Option<f64>,
}

/// ROC over the given `(row, col)` cells, sweeping the threshold over the
/// unique posterior values (a cell is called when its value is ≥ the threshold).
pub fn roc_cells(scores: &[f64], labels: &[bool]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let v = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == v {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((
            if neg > 0 { fp as f64 / neg as f64 } else { 0.0 },
            if pos > 0 { tp as f64 / pos as f64 } else { 0.0 },
        ));
    }
    let auc = (pos > 0 && neg > 0).then(|| {
        points
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
            .sum()
    });
    Ok(RocResult { points, auc })
}

/// ROC over the case experiments (columns in `cases`) of a θ posterior.
pub fn roc_from_posterior(theta_post: &DMatrix<f64>, truth: &DMatrix<bool>, cases: &[usize]) -> Result<RocResult> {
    if theta_post.shape() != truth.shape() {
        return Err(Error::invalid("posterior and truth shapes differ"));
    }
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for &e in cases {
        for j in 0..truth.nrows() {
            scores.push(theta_post[(j, e)]);
            labels.push(truth[(j, e)]);
        }
    }
    roc_cells(&scores, &labels)
}

/// Reorders truth rows from `truth_ids` to `fit_ids`; pathways missing from
/// the fit are dropped.
pub fn align_truth(truth: &DMatrix<bool>, truth_ids: &[String], fit_ids: &[String]) -> Result<DMatrix<bool>> {
    let pos: BTreeMap<&str, usize> = truth_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let rows = fit_ids
        .iter()
        .map(|id| {
            pos.get(id.as_str())
                .copied()
                .ok_or_else(|| Error::invalid(format!("pathway '{id}' has no truth row")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DMatrix::from_fn(rows.len(), truth.ncols(), |r, c| truth[(rows[r], c)]))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "CFA-CAR")]
    CfaCar,
    #[serde(rename = "EFA")]
    Efa,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::CfaCar => "CFA-CAR",
            ModelKind::Efa => "EFA",
        }
    }
}

/// Fits one model to simulated data and scores it against the truth.
pub fn fit_and_score(
    sim: &SimData,
    pathways: &GeneSetCollection,
    functions: &GeneSetCollection,
    jaccard_threshold: f64,
    kind: ModelKind,
    hyper: &Hyperparameters,
    config: &SamplerConfig,
) -> Result<f64> {
    let net = build_network(pathways, functions, jaccard_threshold)?;
    let (data, mask, _) = align(&sim.data, pathways, &net)?;
    let mut model = Model::new(data, mask, net, hyper.clone())?;
    if kind == ModelKind::Efa {
        model = model.into_efa();
    }
    let traces = (0..config.chains)
        .map(|c| run_chain(&model, config, c))
        .collect::<Result<Vec<_>>>()?;
    let post = pooled_theta_post(&traces)?;
    let truth = align_truth(&sim.truth, &sim.pathway_ids, &model.net.pathway_ids)?;
    let cases: Vec<usize> = (0..model.n_experiments())
        .filter(|&e| !model.data.experiments()[e].is_control)
        .collect();
    roc_from_posterior(&post, &truth, &cases)?
        .auc
        .ok_or_else(|| Error::invalid("truth has no positives or no negatives"))
}

/// A level on the benchmark grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum GridPoint {
    Snr(f64),
    /// Corruption fraction applied to the catalog; data generated at the
    /// benchmark's corruption SNR.
    Corruption(f64),
}

/// Benchmark definition, as read from a scenario JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub catalog: CatalogSpec,
    pub scenario: SimScenario,
    pub grid: Vec<GridPoint>,
    pub corruption_snr: f64,
    pub replicates: usize,
    pub models: Vec<ModelKind>,
    pub hyper: Hyperparameters,
    pub sampler: SamplerConfig,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            catalog: CatalogSpec::default(),
            scenario: SimScenario::default(),
            grid: [0.5, 1.5, 2.5, 3.5, 4.5, 5.5].into_iter().map(GridPoint::Snr).collect(),
            corruption_snr: 3.5,
            replicates: 10,
            models: vec![ModelKind::CfaCar, ModelKind::Efa],
            hyper: Hyperparameters::default(),
            sampler: SamplerConfig {
                chains: 1,
                ..Default::default()
            },
        }
    }
}

/// AUC of each replicate; `None` marks a failed fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub point: GridPoint,
    pub model: ModelKind,
    pub aucs: Vec<Option<f64>>,
    pub mean_auc: f64,
    pub stderr: f64,
    pub n_failed: usize,
}

impl ComparisonRow {
    fn new(point: GridPoint, model: ModelKind, aucs: Vec<Option<f64>>) -> Self {
        let ok: Vec<f64> = aucs.iter().flatten().copied().collect();
        let n = ok.len() as f64;
        let mean = ok.iter().sum::<f64>() / n;
        let sd = (ok.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt();
        Self {
            point,
            model,
            n_failed: aucs.len() - ok.len(),
            aucs,
            mean_auc: mean,
            stderr: if ok.len() > 1 { sd / n.sqrt() } else { 0.0 },
        }
    }
}

/// Runs every grid point × replicate × model; both models see identical data
/// and catalogs within a replicate. Replicates run on up to `jobs` threads.
pub fn run_comparison(bench: &BenchConfig, jobs: usize) -> Result<Vec<ComparisonRow>> {
    if bench.grid.is_empty() {
        return Err(Error::invalid("benchmark grid is empty"));
    }
    if bench.replicates == 0 || bench.models.is_empty() {
        return Err(Error::invalid("benchmark needs at least one replicate and one model"));
    }
    bench.sampler.validate()?;
    bench.hyper.validate()?;
    let cat = synthetic_catalog(&bench.catalog)?;
    let tasks: Vec<(usize, usize)> = (0..bench.grid.len())
        .flat_map(|g| (0..bench.replicates).map(move |r| (g, r)))
        .collect();
    let run = |&(g, r): &(usize, usize)| -> Vec<Option<f64>> {
        let point = bench.grid[g];
        let snr = match point {
            GridPoint::Snr(s) => s,
            GridPoint::Corruption(_) => bench.corruption_snr,
        };
        // corruption levels share the data of their replicate
        let data_seed = match point {
            GridPoint::Snr(_) => bench.scenario.seed.wrapping_add(1000 * g as u64 + r as u64),
            GridPoint::Corruption(_) => bench.scenario.seed.wrapping_add(500_000 + r as u64),
        };
        let scenario = SimScenario {
            snr,
            seed: data_seed,
            ..bench.scenario.clone()
        };
        let prepared = generate_dataset(&cat, &scenario).and_then(|sim| {
            let pathways = match point {
                GridPoint::Snr(_) => cat.pathways.clone(),
                GridPoint::Corruption(f) => {
                    corrupt_catalog(&cat.pathways, f, data_seed.wrapping_add(7919 * g as u64))?.0
                }
            };
            Ok((sim, pathways))
        });
        bench
            .models
            .iter()
            .map(|&kind| {
                let (sim, pathways) = prepared.as_ref().ok()?;
                let sampler = SamplerConfig {
                    seed: data_seed,
                    ..bench.sampler.clone()
                };
                match fit_and_score(
                    sim,
                    pathways,
                    &cat.functions,
                    cat.jaccard_threshold,
                    kind,
                    &bench.hyper,
                    &sampler,
                ) {
                    Ok(a) => Some(a),
                    Err(e) => {
                        log::warn!("{} replicate {r} at {point:?} failed: {e}", kind.name());
                        None
                    }
                }
            })
            .collect()
    };
    let results: Vec<Vec<Option<f64>>> =
        crate::sampler::chain::thread_pool(jobs)?.install(|| tasks.par_iter().map(run).collect());

    let mut rows = Vec::new();
    for (g, &point) in bench.grid.iter().enumerate() {
        for (m, &kind) in bench.models.iter().enumerate() {
            let aucs = (0..bench.replicates)
                .map(|r| results[g * bench.replicates + r][m])
                .collect();
            rows.push(ComparisonRow::new(point, kind, aucs));
        }
    }
    Ok(rows)
}

/// CSV table of the comparison rows.
pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut s = String::from("grid,level,model,mean_auc,stderr,n_ok,n_failed\n");
    for r in rows {
        let (kind, level) = match r.point {
            GridPoint::Snr(v) => ("snr", v),
            GridPoint::Corruption(v) => ("corruption", v),
        };
        s.push_str(&format!(
            "{kind},{level},{},{},{},{},{}\n",
            r.model.name(),
            r.mean_auc,
            r.stderr,
            r.aucs.len() - r.n_failed,
            r.n_failed
        ));
    }
    s
}

/// Model and mask for a simulated data set under a given catalog.
pub fn model_for(
    sim: &SimData,
    pathways: &GeneSetCollection,
    net: &PathwayNetwork,
    hyper: &Hyperparameters,
) -> Result<Model> {
    let (data, mask, _): (ExpressionDataset, LoadingMask, _) = align(&sim.data, pathways, net)?;
    Model::new(data, mask, net.clone(), hyper.clone())
}
