//! Acceptance suite. Prints one `[PASS]`/`[FAIL]`/`[SKIP]` line per criterion
//! and exits non-zero if any criterion fails.
//!
//! Optional inputs: `DCCL_YELP_PATH` points at a user,item[,rating] CSV/TSV of
//! the public Yelp reviews (criteria 4 and 8).

use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use dccl_core::config::RunConfig;
use dccl_core::dataio::{binarize, k_core_filter, load_interactions, split, InputFormat};
use dccl_core::eval::evaluate;
use dccl_core::losses::{
    bpr_batch_loss, conformity_contrastive_loss, infonce_loss, interest_contrastive_loss, LossMode,
    LossOutput, SparseGrad,
};
use dccl_core::model::{init_embeddings, Backbone, NormAdjacency, TableId};
use dccl_core::pipeline::{
    cmd_eval, cmd_prepare, cmd_train, create_run_dir, CHECKPOINT_FILE, LAST_CHECKPOINT_FILE,
    TRAIN_LOG_FILE,
};
use dccl_core::synth::{
    disentanglement_score, experiment_train_config, generate_synthetic, single_embedding_score,
    SynthConfig,
};
use dccl_core::trainer::{
    adam_step, batch_gradient, sample_batch, scoring_embeddings, AdamState, BatchOptions,
    TrainIndex, TrainingBatch,
};
use dccl_core::{
    compute_popularity, train, DisentangledEmbeddings, InteractionDataset, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances.
const GRAD_REL_TOL: f64 = 1e-4;
const GRAD_MIN_INSTANCES: usize = 50;
const FD_STEP: f64 = 1e-6;
const METRIC_TOL: f64 = 1e-12;
const METRIC_INSTANCES: usize = 100;
const YELP_USERS: f64 = 27_057.0;
const YELP_ITEMS: f64 = 17_843.0;
const YELP_DENSITY: f64 = 1.007e-3;
const YELP_REL_TOL: f64 = 0.05;
const SYNTH_SEEDS: [u64; 3] = [0, 1, 2];
const CONF_CORR_MIN: f64 = 0.6;
const CORR_GAP_MIN: f64 = 0.3;
const OOD_DEGRADATION_RATIO_MAX: f64 = 0.75;
const ABLATION_MIN_GAIN: f64 = 0.05;
const YELP_MIN_GAIN: f64 = 0.10;
const QUADRATIC_RATIO: (f64, f64) = (3.0, 6.0);
const LINEAR_RATIO: (f64, f64) = (1.6, 2.6);

// Frozen fixture: binarize + 10-core expectations from an independent
// reference (tests/fixtures/kcore_oracle.py).
const FIXTURE_USERS: usize = 130;
const FIXTURE_ITEMS: usize = 121;
const FIXTURE_PAIRS: usize = 2654;
const FIXTURE_SHA256: &str = "8337837024c24dae618a48c5adf46ad4c5c80321e5a1dbf21d11a76891fb108f";

#[derive(Clone, Copy, PartialEq)]
enum Status {
    Pass,
    Fail,
    Skip,
}

static RESULTS: Mutex<Vec<(String, Status)>> = Mutex::new(Vec::new());

fn report(id: &str, status: Status, detail: String) {
    let tag = match status {
        Status::Pass => "PASS",
        Status::Fail => "FAIL",
        Status::Skip => "SKIP",
    };
    println!("[{tag}] {id}: {detail}");
    RESULTS.lock().unwrap().push((id.to_string(), status));
}

fn check(id: &str, ok: bool, detail: String) {
    report(id, if ok { Status::Pass } else { Status::Fail }, detail);
}

fn fixture_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reviews_fixture.csv")
}

// ---------------------------------------------------------------- instances

struct Instance {
    emb: DisentangledEmbeddings,
    train: InteractionDataset,
    batch: TrainingBatch,
}

fn random_instance(rng: &mut ChaCha8Rng) -> Instance {
    let nu = rng.random_range(3..=10);
    let ni = rng.random_range(4..=12);
    let dim = rng.random_range(1..=8);
    let mut pairs = Vec::new();
    for u in 0..nu as u32 {
        let deg = rng.random_range(1..ni);
        for _ in 0..deg {
            pairs.push((u, rng.random_range(0..ni as u32)));
        }
    }
    let train = InteractionDataset::from_pairs(nu, ni, pairs).unwrap();
    let stats = compute_popularity(&train).unwrap();
    let index = TrainIndex::new(&train);
    let opts = BatchOptions {
        interest: true,
        conformity: true,
        false_negative_filter: rng.random(),
    };
    let b = rng.random_range(2..=16);
    let batch = sample_batch(&index, &stats, b, rng, opts).unwrap();
    let emb = init_embeddings(nu, ni, dim, rng.random(), 0.5).unwrap();
    Instance { emb, train, batch }
}

fn dense(grads: &SparseGrad, emb: &DisentangledEmbeddings) -> Vec<f64> {
    let mut out = Vec::new();
    for t in TableId::ALL {
        let rows = emb.table(t).rows();
        out.extend_from_slice(grads.to_dense(t, rows, emb.dim()).as_slice());
    }
    out
}

fn finite_difference(
    emb: &DisentangledEmbeddings,
    f: &dyn Fn(&DisentangledEmbeddings) -> f64,
) -> Vec<f64> {
    let mut work = emb.clone();
    let mut out = Vec::new();
    for t in TableId::ALL {
        for idx in 0..emb.table(t).as_slice().len() {
            let x = emb.table(t).as_slice()[idx];
            work.table_mut(t).as_mut_slice()[idx] = x + FD_STEP;
            let up = f(&work);
            work.table_mut(t).as_mut_slice()[idx] = x - FD_STEP;
            let down = f(&work);
            work.table_mut(t).as_mut_slice()[idx] = x;
            out.push((up - down) / (2.0 * FD_STEP));
        }
    }
    out
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

// ---------------------------------------------------------------- criterion 1

#[derive(Clone, Copy, Debug)]
enum Component {
    Bpr,
    Interest,
    Conformity,
    Total,
}

fn component_loss(
    inst: &Instance,
    emb: &DisentangledEmbeddings,
    adj: Option<(&NormAdjacency, usize)>,
    comp: Component,
    mode: LossMode,
) -> LossOutput {
    let b = &inst.batch;
    match adj {
        None => match comp {
            Component::Bpr => bpr_batch_loss(emb, &b.bpr_rows()),
            Component::Interest => {
                interest_contrastive_loss(&emb.user_int, &emb.item_int, &b.interest_rows(), mode)
                    .unwrap()
            }
            Component::Conformity => conformity_contrastive_loss(
                &emb.user_conf,
                &emb.item_conf,
                &b.conformity_rows(),
                mode,
            )
            .unwrap(),
            Component::Total => {
                let (grads, l) = batch_gradient(emb, None, b, 0.3, 0.7, mode).unwrap();
                LossOutput {
                    value: l.total,
                    grads,
                    ..LossOutput::default()
                }
            }
        },
        Some(a) => {
            let (alpha, beta) = match comp {
                Component::Bpr => (0.0, 0.0),
                Component::Interest => (1.0, 0.0),
                Component::Conformity => (0.0, 1.0),
                Component::Total => (0.3, 0.7),
            };
            let (grads, l) = batch_gradient(emb, Some(a), b, alpha, beta, mode).unwrap();
            LossOutput {
                value: l.total,
                grads,
                ..LossOutput::default()
            }
        }
    }
}

fn criterion_1() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let comps = [
        Component::Bpr,
        Component::Interest,
        Component::Conformity,
        Component::Total,
    ];
    let mut done = 0;
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    let mut attempts = 0;
    while done < 64 && attempts < 1000 {
        attempts += 1;
        let inst = random_instance(&mut rng);
        let mode = if done % 2 == 0 {
            LossMode::Weighted
        } else {
            LossMode::Literal
        };
        let backbone = if (done / 2) % 2 == 0 {
            Backbone::Mf
        } else {
            Backbone::LightGcn
        };
        let comp = comps[(done / 4) % 4];
        let adj_owned = match backbone {
            Backbone::Mf => None,
            Backbone::LightGcn => Some(NormAdjacency::from_dataset(&inst.train, true).unwrap()),
        };
        let layers = rng.random_range(1..=3);
        let adj = adj_owned.as_ref().map(|a| (a, layers));
        let analytic = component_loss(&inst, &inst.emb, adj, comp, mode);
        let a = dense(&analytic.grads, &inst.emb);
        if norm(&a) < 1e-8 {
            continue;
        }
        let fd = finite_difference(&inst.emb, &|e| {
            component_loss(&inst, e, adj, comp, mode).value
        });
        let diff: Vec<f64> = a.iter().zip(&fd).map(|(x, y)| x - y).collect();
        let rel = norm(&diff) / norm(&a).max(norm(&fd));
        if rel > worst {
            worst = rel;
            worst_case = format!("{comp:?}/{mode}/{backbone}");
        }
        done += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        "criterion 1 (gradient suite)",
        done >= GRAD_MIN_INSTANCES && worst <= GRAD_REL_TOL && secs < 60.0,
        format!(
            "{done} instances (BPR/interest/conformity/total x weighted/literal x MF/LightGCN), \
             max norm-wise rel err {worst:.2e} at {worst_case} (tol {GRAD_REL_TOL:.0e}), {secs:.1}s"
        ),
    );
}

// ---------------------------------------------------------------- criterion 2

fn bit_identical(a: &SparseGrad, b: &SparseGrad) -> bool {
    a.len() == b.len()
        && a.iter().zip(b.iter()).all(|((t1, r1, g1), (t2, r2, g2))| {
            t1 == t2
                && r1 == r2
                && g1.len() == g2.len()
                && g1.iter().zip(g2).all(|(x, y)| x.to_bits() == y.to_bits())
        })
}

fn criterion_2() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut checked = 0;
    let mut mismatches = 0;
    for _ in 0..60 {
        let inst = random_instance(&mut rng);
        let e = &inst.emb;
        let b = &inst.batch;
        let int_rows = b.interest_rows();
        let conf_rows = b.conformity_rows();
        let lit_i =
            interest_contrastive_loss(&e.user_int, &e.item_int, &int_rows, LossMode::Literal)
                .unwrap();
        let ref_i = infonce_loss(
            &e.user_int,
            &e.item_int,
            &int_rows,
            TableId::UserInt,
            TableId::ItemInt,
        )
        .unwrap();
        let lit_c =
            conformity_contrastive_loss(&e.user_conf, &e.item_conf, &conf_rows, LossMode::Literal)
                .unwrap();
        let ref_c = infonce_loss(
            &e.user_conf,
            &e.item_conf,
            &conf_rows,
            TableId::UserConf,
            TableId::ItemConf,
        )
        .unwrap();
        for (lit, reference) in [(&lit_i, &ref_i), (&lit_c, &ref_c)] {
            checked += 1;
            if !bit_identical(&lit.grads, &reference.grads) {
                mismatches += 1;
            }
        }
    }
    check(
        "criterion 2 (literal-mode inertness)",
        mismatches == 0,
        format!("{checked} interest/conformity gradient sets compared bit-for-bit, {mismatches} mismatches"),
    );
}

// ---------------------------------------------------------------- criterion 3

/// Exhaustive ranking: sort every non-train item by (score desc, id asc).
fn oracle_metrics(
    emb: &DisentangledEmbeddings,
    train: &InteractionDataset,
    test: &InteractionDataset,
    k: usize,
) -> (f64, f64) {
    let (mut hr, mut ndcg, mut n) = (0.0, 0.0, 0usize);
    for u in 0..test.num_users() {
        let t: Vec<u32> = test
            .pairs()
            .iter()
            .filter(|p| p.0 == u as u32)
            .map(|p| p.1)
            .collect();
        if t.is_empty() {
            continue;
        }
        let mut ranked: Vec<(f64, u32)> = (0..emb.num_items() as u32)
            .filter(|&i| !train.contains(u as u32, i))
            .map(|i| {
                let mut s = 0.0;
                for d in 0..emb.dim() {
                    s += emb.user_int.row(u)[d] * emb.item_int.row(i as usize)[d];
                }
                let mut c = 0.0;
                for d in 0..emb.dim() {
                    c += emb.user_conf.row(u)[d] * emb.item_conf.row(i as usize)[d];
                }
                (s + c, i)
            })
            .collect();
        ranked.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        let m = k.min(t.len());
        let mut hits = 0.0;
        let mut dcg = 0.0;
        for (pos, &(_, i)) in ranked.iter().take(k).enumerate() {
            if t.contains(&i) {
                hits += 1.0;
                dcg += 1.0 / ((pos + 2) as f64).log2();
            }
        }
        let idcg: f64 = (0..m).map(|p| 1.0 / ((p + 2) as f64).log2()).sum();
        hr += hits / m as f64;
        ndcg += dcg / idcg;
        n += 1;
    }
    (hr / n as f64, ndcg / n as f64)
}

fn criterion_3() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < METRIC_INSTANCES {
        let nu = rng.random_range(1..=20);
        let ni = rng.random_range(2..=50);
        let dim = rng.random_range(1..=6);
        let (mut tr, mut te) = (Vec::new(), Vec::new());
        for u in 0..nu as u32 {
            for i in 0..ni as u32 {
                match rng.random_range(0..10) {
                    0 | 1 => tr.push((u, i)),
                    2 => te.push((u, i)),
                    _ => {}
                }
            }
        }
        let train = InteractionDataset::from_pairs(nu, ni, tr).unwrap();
        let test = InteractionDataset::from_pairs(nu, ni, te).unwrap();
        if train.is_empty() || test.is_empty() {
            continue;
        }
        let mut emb = init_embeddings(nu, ni, dim, rng.random(), 1.0).unwrap();
        if done % 3 == 0 {
            // coarse values force score ties
            for t in TableId::ALL {
                for v in emb.table_mut(t).as_mut_slice() {
                    *v = v.round();
                }
            }
        }
        let stats = compute_popularity(&train).unwrap();
        let k = [1, 3, 5, 10, 20][done % 5];
        let rep = evaluate(&emb, &train, &test, &stats, k).unwrap();
        let (hr, ndcg) = oracle_metrics(&emb, &train, &test, k);
        worst = worst.max((rep.hr - hr).abs()).max((rep.ndcg - ndcg).abs());
        done += 1;
    }
    check(
        "criterion 3 (metric oracle)",
        worst <= METRIC_TOL,
        format!("{done} instances (<=20 users, <=50 items, ties included), max |diff| {worst:.1e} (tol {METRIC_TOL:.0e})"),
    );
}

// ---------------------------------------------------------------- criterion 4

fn canonical_text(data: &InteractionDataset) -> String {
    let mut s = format!(
        "users={} items={} pairs={}\n",
        data.num_users(),
        data.num_items(),
        data.len()
    );
    for &(u, i) in data.pairs() {
        s.push_str(&format!("{u}\t{i}\n"));
    }
    s
}

fn sha256_hex(text: &str) -> String {
    use sha2::{Digest, Sha256};
    Sha256::digest(text.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn criterion_4() {
    let raw = load_interactions(&fixture_path(), InputFormat::Csv).unwrap();
    let core = k_core_filter(&binarize(&raw), 10);
    let digest = sha256_hex(&canonical_text(&core));
    let written = {
        let tmp = tempfile::tempdir().unwrap();
        let p = tmp.path().join("d.tsv");
        dccl_core::dataio::write_dataset(&p, &core).unwrap();
        sha256_hex(&std::fs::read_to_string(&p).unwrap())
    };
    check(
        "criterion 4 (preprocessing fidelity, frozen fixture)",
        core.num_users() == FIXTURE_USERS
            && core.num_items() == FIXTURE_ITEMS
            && core.len() == FIXTURE_PAIRS
            && digest == FIXTURE_SHA256
            && written == FIXTURE_SHA256,
        format!(
            "{} records -> {} users / {} items / {} pairs (expected {FIXTURE_USERS}/{FIXTURE_ITEMS}/{FIXTURE_PAIRS}), \
             canonical sha256 {}",
            raw.records.len(),
            core.num_users(),
            core.num_items(),
            core.len(),
            if digest == FIXTURE_SHA256 { "matches" } else { "DIFFERS" }
        ),
    );
    match yelp_path() {
        None => report(
            "criterion 4 (preprocessing fidelity, Yelp)",
            Status::Skip,
            "DCCL_YELP_PATH not set; the public Yelp export is not bundled".into(),
        ),
        Some((path, format)) => {
            let core = k_core_filter(&binarize(&load_interactions(&path, format).unwrap()), 10);
            let rel = |got: f64, want: f64| (got - want).abs() / want;
            let (ru, ri, rd) = (
                rel(core.num_users() as f64, YELP_USERS),
                rel(core.num_items() as f64, YELP_ITEMS),
                rel(core.density(), YELP_DENSITY),
            );
            check(
                "criterion 4 (preprocessing fidelity, Yelp)",
                ru <= YELP_REL_TOL && ri <= YELP_REL_TOL && rd <= YELP_REL_TOL,
                format!(
                    "{} users / {} items / density {:.4e} vs 27057 / 17843 / 1.007e-3 (rel {ru:.3} / {ri:.3} / {rd:.3}, tol {YELP_REL_TOL})",
                    core.num_users(),
                    core.num_items(),
                    core.density()
                ),
            );
        }
    }
}

fn yelp_path() -> Option<(PathBuf, InputFormat)> {
    let p = PathBuf::from(std::env::var_os("DCCL_YELP_PATH")?);
    let format = if p.extension().is_some_and(|e| e == "tsv") {
        InputFormat::Tsv
    } else {
        InputFormat::Csv
    };
    Some((p, format))
}

// ---------------------------------------------------------------- criteria 5-7

#[derive(Clone, Copy, Default)]
struct VariantResult {
    hr_iid: f64,
    hr_ood: f64,
    conf_corr: f64,
    int_corr: f64,
}

impl VariantResult {
    fn degradation(&self) -> f64 {
        (self.hr_iid - self.hr_ood) / self.hr_iid
    }
}

struct SeedResult {
    seed: u64,
    mf: VariantResult,
    dccl: VariantResult,
    no_cpcl: VariantResult,
    no_ipcl: VariantResult,
    secs: f64,
}

fn run_variant(
    data: &dccl_core::synth::SyntheticData,
    stats: &dccl_core::PopularityStats,
    cfg: &TrainConfig,
) -> VariantResult {
    let out = train(cfg, &data.train, stats).unwrap();
    let emb = scoring_embeddings(&out.checkpoint, &data.train).unwrap();
    let single = cfg.alpha == 0.0 && cfg.beta == 0.0;
    let corr = if single {
        single_embedding_score(&emb, &data.world).unwrap()
    } else {
        disentanglement_score(&emb, &data.world).unwrap()
    };
    VariantResult {
        hr_iid: evaluate(&emb, &data.train, &data.test_iid, stats, 20)
            .unwrap()
            .hr,
        hr_ood: evaluate(&emb, &data.train, &data.test_ood, stats, 20)
            .unwrap()
            .hr,
        conf_corr: corr.conf_pop_corr,
        int_corr: corr.int_pop_corr,
    }
}

fn synthetic_runs() -> Vec<SeedResult> {
    SYNTH_SEEDS
        .iter()
        .map(|&seed| {
            let started = Instant::now();
            let data = generate_synthetic(&SynthConfig { seed, ..SynthConfig::default() }).unwrap();
            let stats = compute_popularity(&data.train).unwrap();
            let base = experiment_train_config(seed);
            let with = |alpha: f64, beta: f64| TrainConfig { alpha, beta, ..base.clone() };
            let r = SeedResult {
                seed,
                mf: run_variant(&data, &stats, &with(0.0, 0.0)),
                dccl: run_variant(&data, &stats, &base),
                no_cpcl: run_variant(&data, &stats, &with(base.alpha, 0.0)),
                no_ipcl: run_variant(&data, &stats, &with(0.0, base.beta)),
                secs: started.elapsed().as_secs_f64(),
            };
            println!(
                "       seed {seed}: HR@20 iid/ood  MF {:.4}/{:.4}  DCCL {:.4}/{:.4}  w/o CPCL {:.4}/{:.4}  w/o IPCL {:.4}/{:.4}  ({:.0}s)",
                r.mf.hr_iid, r.mf.hr_ood, r.dccl.hr_iid, r.dccl.hr_ood, r.no_cpcl.hr_iid, r.no_cpcl.hr_ood,
                r.no_ipcl.hr_iid, r.no_ipcl.hr_ood, r.secs
            );
            r
        })
        .collect()
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

fn criteria_5_to_7() {
    let runs = synthetic_runs();
    let slowest = runs.iter().map(|r| r.secs).fold(0.0, f64::max);

    let per_seed: Vec<String> = runs
        .iter()
        .map(|r| {
            format!(
                "seed {} conf {:.3} int {:.3} (MF single {:.3})",
                r.seed, r.dccl.conf_corr, r.dccl.int_corr, r.mf.conf_corr
            )
        })
        .collect();
    let dccl_ok = runs.iter().all(|r| {
        r.dccl.conf_corr >= CONF_CORR_MIN && r.dccl.int_corr <= r.dccl.conf_corr - CORR_GAP_MIN
    });
    let mf_fails = runs.iter().all(|r| {
        !(r.mf.conf_corr >= CONF_CORR_MIN && r.mf.int_corr <= r.mf.conf_corr - CORR_GAP_MIN)
    });
    check(
        "criterion 5 (synthetic disentanglement)",
        dccl_ok && mf_fails && slowest < 600.0,
        format!(
            "{}; need conf >= {CONF_CORR_MIN} and int <= conf - {CORR_GAP_MIN} for DCCL_MF, neither for MF; slowest seed {slowest:.0}s",
            per_seed.join("; ")
        ),
    );

    let mf_deg = mean(runs.iter().map(|r| r.mf.degradation()));
    let dccl_deg = mean(runs.iter().map(|r| r.dccl.degradation()));
    check(
        "criterion 6 (synthetic OOD robustness)",
        mf_deg > 0.0 && dccl_deg <= OOD_DEGRADATION_RATIO_MAX * mf_deg,
        format!(
            "mean relative HR@20 degradation iid->ood: DCCL_MF {dccl_deg:.3}, MF {mf_deg:.3} (ratio {:.3}, need <= {OOD_DEGRADATION_RATIO_MAX})",
            dccl_deg / mf_deg
        ),
    );

    let hr = |f: fn(&SeedResult) -> VariantResult| mean(runs.iter().map(|r| f(r).hr_iid));
    let (full, no_c, no_i, mf) = (
        hr(|r| r.dccl),
        hr(|r| r.no_cpcl),
        hr(|r| r.no_ipcl),
        hr(|r| r.mf),
    );
    check(
        "criterion 7 (ablation ordering)",
        full >= no_c && no_c >= mf && full >= no_i && no_i >= mf && full >= (1.0 + ABLATION_MIN_GAIN) * mf,
        format!(
            "mean HR@20 (test_iid): DCCL {full:.4}, w/o CPCL {no_c:.4}, w/o IPCL {no_i:.4}, MF {mf:.4}; DCCL/MF = {:.3} (need >= {:.2})",
            full / mf,
            1.0 + ABLATION_MIN_GAIN
        ),
    );
}

// ---------------------------------------------------------------- criterion 8

fn criterion_8() {
    let Some((path, format)) = yelp_path() else {
        report(
            "criterion 8 (Yelp directional reproduction)",
            Status::Skip,
            "DCCL_YELP_PATH not set; long-running and optional in CI".into(),
        );
        return;
    };
    let data = k_core_filter(&binarize(&load_interactions(&path, format).unwrap()), 10);
    let parts = split(&data, 0.2, 0).unwrap();
    let stats = compute_popularity(&parts.train).unwrap();
    let hr_of = |alpha: f64, beta: f64| {
        let cfg = TrainConfig {
            alpha,
            beta,
            ..TrainConfig::default()
        };
        let out = train(&cfg, &parts.train, &stats).unwrap();
        let emb = scoring_embeddings(&out.checkpoint, &parts.train).unwrap();
        evaluate(&emb, &parts.train, &parts.test, &stats, 20)
            .unwrap()
            .hr
    };
    let mf = hr_of(0.0, 0.0);
    let dccl = hr_of(0.1, 0.1);
    check(
        "criterion 8 (Yelp directional reproduction)",
        dccl >= (1.0 + YELP_MIN_GAIN) * mf,
        format!(
            "HR@20 x100: MF {:.3}, DCCL_MF {:.3} (gain {:.1}%, need >= 10%)",
            100.0 * mf,
            100.0 * dccl,
            100.0 * (dccl / mf - 1.0)
        ),
    );
}

// ---------------------------------------------------------------- criterion 9

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn criterion_9() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let (nu, ni, d) = (8000, 4000, 64);
    let pairs: Vec<(u32, u32)> = (0..nu as u32)
        .flat_map(|u| (0..10).map(move |k| (u, (u * 37 + k * 101) % ni as u32)))
        .collect();
    let train_set = InteractionDataset::from_pairs(nu, ni, pairs).unwrap();
    let stats = compute_popularity(&train_set).unwrap();
    let index = TrainIndex::new(&train_set);
    let emb = init_embeddings(nu, ni, d, 1, 0.1).unwrap();
    let on = BatchOptions {
        interest: true,
        conformity: true,
        false_negative_filter: true,
    };
    let off = BatchOptions {
        interest: false,
        conformity: false,
        false_negative_filter: true,
    };

    let contrastive_time = |b: usize, rng: &mut ChaCha8Rng| {
        let batch = sample_batch(&index, &stats, b, rng, on).unwrap();
        let (ir, cr) = (batch.interest_rows(), batch.conformity_rows());
        let t = Instant::now();
        let i = interest_contrastive_loss(&emb.user_int, &emb.item_int, &ir, LossMode::Weighted)
            .unwrap();
        let c =
            conformity_contrastive_loss(&emb.user_conf, &emb.item_conf, &cr, LossMode::Weighted)
                .unwrap();
        std::hint::black_box((i, c));
        t.elapsed().as_secs_f64()
    };
    let step_time = |b: usize, rng: &mut ChaCha8Rng| {
        let mut e = emb.clone();
        let mut adam = AdamState::new(&e);
        let t = Instant::now();
        for _ in 0..20 {
            let batch = sample_batch(&index, &stats, b, rng, off).unwrap();
            let (g, _) = batch_gradient(&e, None, &batch, 0.0, 0.0, LossMode::Weighted).unwrap();
            adam_step(&mut e, &g, &mut adam, 0.001).unwrap();
        }
        t.elapsed().as_secs_f64()
    };
    let ratio = |f: &dyn Fn(usize, &mut ChaCha8Rng) -> f64, b: usize, rng: &mut ChaCha8Rng| {
        f(b, rng);
        let small = median((0..7).map(|_| f(b, rng)).collect());
        let large = median((0..7).map(|_| f(2 * b, rng)).collect());
        (small, large, large / small)
    };
    let (cs, cl, cr) = ratio(&contrastive_time, 512, &mut rng);
    let (ls, ll, lr) = ratio(&step_time, 1024, &mut rng);
    check(
        "criterion 9 (complexity)",
        (QUADRATIC_RATIO.0..=QUADRATIC_RATIO.1).contains(&cr)
            && (LINEAR_RATIO.0..=LINEAR_RATIO.1).contains(&lr),
        format!(
            "contrastive phase B=512->1024: {:.1}ms -> {:.1}ms, x{cr:.2} (need [3, 6]); \
             alpha=beta=0 step B=1024->2048: {:.1}ms -> {:.1}ms, x{lr:.2} (need [1.6, 2.6])",
            1e3 * cs,
            1e3 * cl,
            1e3 * ls / 20.0,
            1e3 * ll / 20.0
        ),
    );
}

// ---------------------------------------------------------------- criterion 10

struct PipelineArtifacts {
    files: Vec<(String, Vec<u8>)>,
}

fn run_pipeline(out: &Path) -> PipelineArtifacts {
    let mut cfg = RunConfig::default();
    cfg.set("out", out.to_str().unwrap()).unwrap();
    cfg.set("input", fixture_path().to_str().unwrap()).unwrap();
    cfg.apply("format=csv").unwrap();
    cfg.apply("epochs=2").unwrap();
    cfg.apply("seed=17").unwrap();
    let prep = create_run_dir(&cfg, "prepare").unwrap();
    cmd_prepare(&cfg, &prep).unwrap();
    cfg.set("data_dir", prep.to_str().unwrap()).unwrap();
    let run = create_run_dir(&cfg, "train").unwrap();
    cmd_train(&cfg, &run).unwrap();
    cfg.set("checkpoint", run.join(CHECKPOINT_FILE).to_str().unwrap())
        .unwrap();
    let ev = create_run_dir(&cfg, "eval").unwrap();
    cmd_eval(&cfg, &ev).unwrap();

    let read = |p: PathBuf| std::fs::read(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    let mut files = Vec::new();
    for f in [
        "dataset.tsv",
        "train.tsv",
        "test.tsv",
        "popularity.tsv",
        "user_keys.tsv",
        "item_keys.tsv",
    ] {
        files.push((f.to_string(), read(prep.join(f))));
    }
    files.push((CHECKPOINT_FILE.into(), read(run.join(CHECKPOINT_FILE))));
    files.push((
        LAST_CHECKPOINT_FILE.into(),
        read(run.join(LAST_CHECKPOINT_FILE)),
    ));
    // the wall-clock column is the only non-deterministic field
    let log = String::from_utf8(read(run.join(TRAIN_LOG_FILE))).unwrap();
    let stripped: String = log
        .lines()
        .map(|l| l.rsplit_once('\t').map_or(l, |(head, _)| head).to_string() + "\n")
        .collect();
    files.push((TRAIN_LOG_FILE.into(), stripped.into_bytes()));
    files.push(("metrics.tsv".into(), read(ev.join("metrics.tsv"))));
    PipelineArtifacts { files }
}

fn criterion_10() {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(2)
        .build()
        .unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let a = pool.install(|| run_pipeline(&tmp.path().join("a")));
    let b = pool.install(|| run_pipeline(&tmp.path().join("b")));
    let differing: Vec<&str> = a
        .files
        .iter()
        .zip(&b.files)
        .filter(|(x, y)| x.1 != y.1)
        .map(|(x, _)| x.0.as_str())
        .collect();
    check(
        "criterion 10 (determinism)",
        differing.is_empty(),
        format!(
            "prepare -> train (2 epochs) -> eval twice on the fixture with seed 17 and 2 threads: {} artifacts compared, differing: {}",
            a.files.len(),
            if differing.is_empty() { "none".to_string() } else { differing.join(", ") }
        ),
    );
}

fn main() {
    // `cargo test` passes harness flags; a name filter selects criteria by
    // number (e.g. `cargo test --test acceptance -- 3 9`).
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let wanted = |n: &str| filters.is_empty() || filters.iter().any(|f| f == n);
    println!("acceptance criteria");
    if wanted("1") {
        criterion_1();
    }
    if wanted("2") {
        criterion_2();
    }
    if wanted("3") {
        criterion_3();
    }
    if wanted("4") {
        criterion_4();
    }
    if wanted("5") || wanted("6") || wanted("7") {
        criteria_5_to_7();
    }
    if wanted("8") {
        criterion_8();
    }
    if wanted("9") {
        criterion_9();
    }
    if wanted("10") {
        criterion_10();
    }
    let results = RESULTS.lock().unwrap();
    let failed = results.iter().filter(|r| r.1 == Status::Fail).count();
    let skipped = results.iter().filter(|r| r.1 == Status::Skip).count();
    println!(
        "acceptance: {} passed, {failed} failed, {skipped} skipped",
        results.len() - failed - skipped
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
