//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails. Oracles here are written independently of the
//! library code they check.
//!
//! Set `SHOTINDEX_ACCEPTANCE_KEYFRAMES` to shrink the latency corpus when
//! iterating locally; the gate itself uses 7,000,000.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use unicode_normalization::UnicodeNormalization;

use shotindex_core::bench::{run_latency, synthetic_index};
use shotindex_core::bundle::{build_bundle, ingest_archive, ArchiveBundle, EncoderConfig, IngestInputs};
use shotindex_core::eval::{average_precision, parse_judgments, parse_run};
use shotindex_core::hamming::{hamming, read_snapshot, write_snapshot, CodeStore, VpTree};
use shotindex_core::ingest::{
    parse_annotations, parse_codes, parse_manifest, parse_text, parse_vectors, write_annotations, write_codes,
    write_manifest, write_text, FeatureVector, HyperplaneEncoder,
};
use shotindex_core::lexical::{levenshtein, Vocabulary};
use shotindex_core::model::{
    AnnotationEntry, AnnotationKind, BinaryCode, Code256, Code64, CodeSpace, RankedResult, ShotId, ShotRef, ShotTable,
    TextOccurrence,
};
use shotindex_core::similarity::{
    keyframe_codes, search_shots, QueryCodes, SimilarityIndex, SimilarityQuery, SpaceIndex, DEFAULT_SHORTLIST,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: Vec<Criterion> = vec![
        ("latency: 7M keyframes, 100 queries, each < 2 s", latency),
        ("exactness: knn64 equals linear scan", knn_exactness),
        ("end-to-end: shot ranking equals brute-force oracle", end_to_end),
        ("average precision oracle within 1e-12", ap_oracle),
        ("metric properties: Hamming and Levenshtein", metric_properties),
        ("encoder locality: mean |d/256 - theta/pi| <= 0.05", encoder_locality),
        ("format round trips and fuzzing", formats),
        ("text ranking oracle on 500-word vocabularies", text_oracle),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let started = Instant::now();
        let result = catch_unwind(check).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        let verdict = if result.passed { "PASS" } else { "FAIL" };
        if !result.passed {
            failed += 1;
        }
        println!(
            "acceptance {verdict} [{name}] {} ({:.1} s)",
            result.detail,
            started.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}

// ---------------------------------------------------------------------------
// Latency

fn latency() -> Outcome {
    let keyframes: usize = std::env::var("SHOTINDEX_ACCEPTANCE_KEYFRAMES")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(7_000_000);
    let started = Instant::now();
    let index = synthetic_index(keyframes, 2024);
    let build = started.elapsed();
    let (report, samples) = run_latency(&index, 100, 1.0, 100, DEFAULT_SHORTLIST, 2024).expect("queries run");
    let bound = Duration::from_secs(2);
    let slow = samples.iter().filter(|d| **d >= bound).count();
    outcome(
        slow == 0 && report.keyframes >= 7_000_000 && samples.len() == 100,
        format!(
            "keyframes={} build={:.1}s p50={:.1}ms p95={:.1}ms p99={:.1}ms max={:.1}ms over_bound={slow} self_hits={}",
            report.keyframes,
            build.as_secs_f64(),
            report.p50_ms,
            report.p95_ms,
            report.p99_ms,
            report.max_ms,
            report.self_hits
        ),
    )
}

// ---------------------------------------------------------------------------
// Code generation shared by the index criteria

/// Codes drawn around a few centers with a handful of flipped bits, so that
/// equal distances and duplicate codes are common.
fn clustered64(rng: &mut ChaCha8Rng, n: usize) -> Vec<Code64> {
    let centers: Vec<u64> = (0..rng.gen_range(1..20)).map(|_| rng.gen()).collect();
    (0..n)
        .map(|_| {
            let mut c = *centers.choose(rng).unwrap();
            for _ in 0..rng.gen_range(0..6) {
                c ^= 1 << rng.gen_range(0..64);
            }
            Code64(c)
        })
        .collect()
}

fn random_codes64(rng: &mut ChaCha8Rng, n: usize) -> Vec<Code64> {
    if rng.gen_bool(0.5) {
        clustered64(rng, n)
    } else {
        (0..n).map(|_| Code64(rng.gen())).collect()
    }
}

fn popcount_distance(a: u64, b: u64) -> u32 {
    (0..64).filter(|i| (a >> i) & 1 != (b >> i) & 1).count() as u32
}

fn knn_exactness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = 0;
    let mut queries = 0;
    let mut sizes = Vec::new();
    for corpus in 0..20 {
        let n = match corpus {
            0 => 50_000,
            1 => rng.gen_range(1..=64),
            _ => rng.gen_range(1..=50_000),
        };
        sizes.push(n);
        let codes = random_codes64(&mut rng, n);
        let store = CodeStore::from_codes(CodeSpace::Semantic, codes.clone(), vec![Code256([0; 4]); n]);
        let tree = VpTree::build(&store, rng.gen()).expect("tree builds");
        for q in 0..100 {
            let query = if q % 2 == 0 {
                codes[rng.gen_range(0..n)]
            } else {
                Code64(rng.gen())
            };
            let k = match q % 4 {
                0 => 1,
                1 => rng.gen_range(1..=100),
                2 => rng.gen_range(1..=10_000),
                _ => n + rng.gen_range(0..5),
            };
            let mut scan: Vec<(u32, u32)> = codes
                .iter()
                .enumerate()
                .map(|(i, c)| (popcount_distance(query.0, c.0), i as u32))
                .collect();
            scan.sort_unstable();
            scan.truncate(k);
            let got = tree.knn64(query, k).expect("knn runs");
            let mut got_d: Vec<u32> = got.iter().map(|h| h.distance).collect();
            got_d.sort_unstable();
            let want_d: Vec<u32> = scan.iter().map(|p| p.0).collect();
            let want_pairs: Vec<(u32, u32)> = scan;
            let got_pairs: Vec<(u32, u32)> = got.iter().map(|h| (h.distance, h.ordinal)).collect();
            if got_d != want_d || got_pairs != want_pairs {
                mismatches += 1;
            }
            queries += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!(
            "corpora=20 sizes={}..={} queries={queries} mismatches={mismatches}",
            sizes.iter().min().unwrap(),
            sizes.iter().max().unwrap()
        ),
    )
}

// ---------------------------------------------------------------------------
// End-to-end

fn random_table(rng: &mut ChaCha8Rng, shots: usize) -> ShotTable {
    let videos = rng.gen_range(1..=8);
    let names: Vec<Arc<str>> = (0..videos).map(|v| Arc::from(format!("video-{v:02}"))).collect();
    let mut next = vec![0u32; videos];
    let refs = (0..shots)
        .map(|_| {
            let v = rng.gen_range(0..videos);
            let shot_index = next[v];
            next[v] += rng.gen_range(1..3);
            let start = shot_index as u64 * 50;
            ShotRef {
                video_id: names[v].clone(),
                shot_index,
                start_frame: start,
                end_frame: start + rng.gen_range(4..49),
            }
        })
        .collect();
    ShotTable::with_derived_keyframes(refs).expect("valid shots")
}

fn random_store(rng: &mut ChaCha8Rng, space: CodeSpace, n: usize) -> CodeStore {
    let codes64 = random_codes64(rng, n);
    let clustered = rng.gen_bool(0.5);
    let base: [u64; 4] = rng.gen();
    let codes256 = (0..n)
        .map(|_| {
            if clustered {
                let mut w = base;
                for _ in 0..rng.gen_range(0..12) {
                    w[rng.gen_range(0..4)] ^= 1 << rng.gen_range(0..64);
                }
                Code256(w)
            } else {
                Code256(rng.gen())
            }
        })
        .collect();
    CodeStore::from_codes(space, codes64, codes256)
}

fn distance256(a: &Code256, b: &Code256) -> u32 {
    a.0.iter().zip(&b.0).map(|(x, y)| popcount_distance(*x, *y)).sum()
}

/// Brute force: blend every keyframe, keep each shot's minimum, sort.
fn oracle_ranking(
    table: &ShotTable,
    semantic: &CodeStore,
    low: &CodeStore,
    query: &SimilarityQuery,
) -> Vec<(ShotId, f64)> {
    let mut best: HashMap<ShotId, f64> = HashMap::new();
    for (ordinal, kf) in table.keyframes().iter().enumerate() {
        let ds = distance256(&query.semantic.code256, &semantic.codes256()[ordinal]) as f64 / 256.0;
        let dl = distance256(&query.low_level.unwrap().code256, &low.codes256()[ordinal]) as f64 / 256.0;
        let d = if query.alpha == 1.0 {
            ds
        } else if query.alpha == 0.0 {
            dl
        } else {
            query.alpha * ds + (1.0 - query.alpha) * dl
        };
        let e = best.entry(kf.shot.clone()).or_insert(f64::INFINITY);
        if d < *e {
            *e = d;
        }
    }
    let mut ranked: Vec<(ShotId, f64)> = best.into_iter().collect();
    ranked.sort_by(|a, b| {
        a.1.partial_cmp(&b.1)
            .unwrap()
            .then_with(|| (&*a.0.video_id, a.0.shot_index).cmp(&(&*b.0.video_id, b.0.shot_index)))
    });
    ranked.truncate(query.k_shots);
    ranked.into_iter().map(|(s, d)| (s, 1.0 / (1.0 + d))).collect()
}

fn end_to_end() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut queries = 0;
    let mut mismatches = 0;
    for corpus in 0..12 {
        let shots = if corpus == 0 { 2000 } else { rng.gen_range(1..=2000) };
        let table = random_table(&mut rng, shots);
        let n = table.keyframe_count();
        let semantic = random_store(&mut rng, CodeSpace::Semantic, n);
        let low = random_store(&mut rng, CodeSpace::LowLevel, n);
        let seed = rng.gen();
        let index = SimilarityIndex {
            shots: Arc::new(table),
            semantic: SpaceIndex::build(semantic.clone(), seed).unwrap(),
            low_level: Some(SpaceIndex::build(low.clone(), seed).unwrap()),
        };
        for q in 0..30 {
            let (sem_codes, low_codes) = if q % 2 == 0 {
                let shot = index.shots.shot(rng.gen_range(0..index.shots.len() as u32)).id();
                let (sem, low) = keyframe_codes(&index, &shot, rng.gen_range(0..5)).unwrap();
                (sem, low.unwrap())
            } else {
                let random = |rng: &mut ChaCha8Rng| QueryCodes {
                    code64: Code64(rng.gen()),
                    code256: Code256(rng.gen()),
                };
                (random(&mut rng), random(&mut rng))
            };
            let alpha = match q % 3 {
                0 => 1.0,
                1 => 0.0,
                _ => rng.gen_range(0.01..0.99),
            };
            let query = SimilarityQuery {
                semantic: sem_codes,
                low_level: Some(low_codes),
                alpha,
                k_shots: rng.gen_range(1..=150),
                shortlist_size: DEFAULT_SHORTLIST,
            };
            let got: Vec<(ShotId, f64)> = search_shots(&index, &query)
                .unwrap()
                .entries
                .into_iter()
                .map(|e| (e.shot, e.score))
                .collect();
            if got != oracle_ranking(&index.shots, &semantic, &low, &query) {
                mismatches += 1;
            }
            queries += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("corpora=12 (<=10000 keyframes) queries={queries} alphas=1,0,mixed mismatches={mismatches}"),
    )
}

// ---------------------------------------------------------------------------
// Average precision

/// Direct expansion: for each rank k <= N, precision at k times rel(k), summed
/// and divided by the number of relevant items retrieved within N.
fn ap_expansion(ranking: &[ShotId], relevant: &HashSet<ShotId>, n: usize) -> f64 {
    let top = &ranking[..ranking.len().min(n)];
    let rel = |k: usize| relevant.contains(&top[k - 1]) as u32 as f64;
    let retrieved_relevant: f64 = (1..=top.len()).map(rel).sum();
    if retrieved_relevant == 0.0 {
        return 0.0;
    }
    let mut total = 0.0;
    for k in 1..=top.len() {
        let precision = (1..=k).map(rel).sum::<f64>() / k as f64;
        total += precision * rel(k);
    }
    total / retrieved_relevant
}

fn ap_oracle() -> Outcome {
    let id = |s: &str| ShotId::new(s, 0);
    let hand = average_precision(
        &[id("a"), id("b"), id("c")],
        &[id("a"), id("c")].into_iter().collect(),
        100,
    );
    let hand_ok = (hand - 5.0 / 6.0).abs() <= 1e-12;
    let zero = average_precision(&[id("a"), id("b")], &[id("z")].into_iter().collect(), 100);
    let zero_ok = zero == 0.0;
    // Relevant items beyond the cutoff do not count against AP.
    let late: Vec<ShotId> = (0..150).map(|i| ShotId::new("v", i)).collect();
    let late_ok = average_precision(&late, &[ShotId::new("v", 140)].into_iter().collect(), 100) == 0.0;

    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    let mut pairs = 0;
    for _ in 0..1000 {
        let pool = rng.gen_range(1..400u32);
        let mut ranking: Vec<ShotId> = (0..pool).map(|i| ShotId::new("v", i)).collect();
        ranking.shuffle(&mut rng);
        ranking.truncate(rng.gen_range(0..=pool as usize));
        let density = rng.gen_range(0.0..0.5);
        let relevant: HashSet<ShotId> = (0..pool)
            .filter(|_| rng.gen_bool(density))
            .map(|i| ShotId::new("v", i))
            .collect();
        for n in [100, 200] {
            let d = (average_precision(&ranking, &relevant, n) - ap_expansion(&ranking, &relevant, n)).abs();
            worst = worst.max(d);
            pairs += 1;
        }
    }
    outcome(
        hand_ok && zero_ok && late_ok && worst <= 1e-12,
        format!(
            "pairs={pairs} max_abs_err={worst:e} hand_5/6={hand_ok} empty_is_zero={zero_ok} beyond_cutoff={late_ok}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Metric properties

fn random_word(rng: &mut ChaCha8Rng) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'ä', 'ö', 'ü', 'ß', 'e', 'n'];
    let len = rng.gen_range(0..12);
    (0..len).map(|_| *ALPHABET.choose(rng).unwrap()).collect()
}

fn random_binary(rng: &mut ChaCha8Rng, wide: bool) -> BinaryCode {
    let sparse = rng.gen_bool(0.3);
    let mut word = || -> u64 {
        if sparse {
            1 << rng.gen_range(0..64)
        } else {
            rng.gen()
        }
    };
    if wide {
        BinaryCode::W256(Code256([word(), word(), word(), word()]))
    } else {
        BinaryCode::W64(Code64(word()))
    }
}

fn metric_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut violations = 0;
    for t in 0..10_000 {
        let wide = t % 2 == 1;
        let [a, b, c] = [(); 3].map(|_| random_binary(&mut rng, wide));
        let d = |x: &BinaryCode, y: &BinaryCode| hamming(x, y).unwrap();
        let ok = d(&a, &a) == 0
            && (d(&a, &b) == 0) == (a == b)
            && d(&a, &b) == d(&b, &a)
            && d(&a, &c) <= d(&a, &b) + d(&b, &c)
            && d(&a, &b) as usize <= a.width();
        violations += usize::from(!ok);
    }
    let width_mismatch_rejected = hamming(&BinaryCode::W64(Code64(0)), &BinaryCode::W256(Code256([0; 4]))).is_err();

    let mut lev_violations = 0;
    let mut bound_violations = 0;
    for _ in 0..10_000 {
        let [a, b, c] = [(); 3].map(|_| random_word(&mut rng));
        let (la, lb) = (a.chars().count(), b.chars().count());
        let ok = levenshtein(&a, &a) == 0
            && (levenshtein(&a, &b) == 0) == (a == b)
            && levenshtein(&a, &b) == levenshtein(&b, &a)
            && levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c);
        lev_violations += usize::from(!ok);
        let d = levenshtein(&a, &b);
        bound_violations += usize::from(!(la.abs_diff(lb) <= d && d <= la.max(lb)));
    }
    outcome(
        violations == 0 && lev_violations == 0 && bound_violations == 0 && width_mismatch_rejected,
        format!(
            "hamming_triples=10000 violations={violations} width_mismatch_rejected={width_mismatch_rejected} \
             levenshtein_triples=10000 violations={lev_violations} length_bound_violations={bound_violations}"
        ),
    )
}

// ---------------------------------------------------------------------------
// Encoder locality

fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn encoder_locality() -> Outcome {
    let dim = 128;
    let encoder = HyperplaneEncoder::new(99, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let gauss = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| rng.sample(StandardNormal)).collect() };
    let mut total = 0.0;
    let pairs = 1000;
    for i in 0..pairs {
        let u = unit(gauss(&mut rng));
        // Half the pairs are independent (angles near pi/2 in high dimension);
        // the rest are rotated by a uniform angle to cover [0, pi].
        let v = if i % 2 == 0 {
            unit(gauss(&mut rng))
        } else {
            let w = gauss(&mut rng);
            let along: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
            let w = unit(w.iter().zip(&u).map(|(a, b)| a - along * b).collect());
            let theta = rng.gen_range(0.0..PI);
            u.iter()
                .zip(&w)
                .map(|(a, b)| theta.cos() * a + theta.sin() * b)
                .collect()
        };
        let cos: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>().clamp(-1.0, 1.0);
        let theta = cos.acos();
        let (_, cu) = encoder.encode(&FeatureVector::new(u).unwrap()).unwrap();
        let (_, cv) = encoder.encode(&FeatureVector::new(v).unwrap()).unwrap();
        let normalized = distance256(&cu, &cv) as f64 / 256.0;
        total += (normalized - theta / PI).abs();
    }
    let mean = total / pairs as f64;
    outcome(
        mean <= 0.05,
        format!("pairs={pairs} width=256 mean_abs_error={mean:.4} tolerance=0.05"),
    )
}

// ---------------------------------------------------------------------------
// Formats

const FUZZ_CASES: usize = 400;

fn mutate(rng: &mut ChaCha8Rng, input: &[u8]) -> Vec<u8> {
    let mut out = input.to_vec();
    for _ in 0..rng.gen_range(1..5) {
        match rng.gen_range(0..6) {
            0 if !out.is_empty() => {
                let i = rng.gen_range(0..out.len());
                out[i] ^= 1 << rng.gen_range(0..8);
            }
            1 if !out.is_empty() => {
                let i = rng.gen_range(0..out.len());
                out[i] = rng.gen();
            }
            2 => out.truncate(rng.gen_range(0..=out.len())),
            3 => {
                let i = rng.gen_range(0..=out.len());
                let junk: Vec<u8> = (0..rng.gen_range(1..16)).map(|_| rng.gen()).collect();
                out.splice(i..i, junk);
            }
            4 => {
                let i = rng.gen_range(0..=out.len());
                let token: &[u8] = [&b"\t"[..], b"\n", b"-1", b"NaN", b"1e999", b"#", b"K\t", b"\xff"]
                    .choose(rng)
                    .unwrap();
                out.splice(i..i, token.iter().copied());
            }
            _ if out.len() > 1 => {
                let a = rng.gen_range(0..out.len());
                let b = rng.gen_range(a..out.len());
                let chunk = out[a..b].to_vec();
                out.splice(a..a, chunk);
            }
            _ => {}
        }
    }
    out
}

/// Counts inputs on which `parse` panicked.
fn fuzz(rng: &mut ChaCha8Rng, seed_input: &[u8], mut parse: impl FnMut(&[u8])) -> usize {
    let mut panics = 0;
    for _ in 0..FUZZ_CASES {
        let input = mutate(rng, seed_input);
        if catch_unwind(AssertUnwindSafe(|| parse(&input))).is_err() {
            panics += 1;
        }
    }
    panics
}

struct Archive {
    table: ShotTable,
    semantic: CodeStore,
    low: CodeStore,
    annotations: Vec<AnnotationEntry>,
    text: Vec<TextOccurrence>,
}

fn small_archive(rng: &mut ChaCha8Rng) -> Archive {
    let table = random_table(rng, 300);
    let n = table.keyframe_count();
    let semantic = random_store(rng, CodeSpace::Semantic, n);
    let low = random_store(rng, CodeSpace::LowLevel, n);
    let mut annotations = Vec::new();
    let mut text = Vec::new();
    for shot in table.shots() {
        for (label, kind) in [
            ("crowd", AnnotationKind::Concept),
            ("Erich Honecker", AnnotationKind::Person),
        ] {
            if rng.gen_bool(0.4) {
                annotations.push(AnnotationEntry {
                    shot: shot.id(),
                    label: label.into(),
                    kind,
                    probability: rng.gen_range(0.0..=1.0),
                });
            }
        }
        if rng.gen_bool(0.5) {
            text.push(TextOccurrence {
                shot: shot.id(),
                frame_number: shot.start_frame,
                word: ["planerfüllung", "kombinat", "volkseigener", "straße"]
                    .choose(rng)
                    .unwrap()
                    .to_string(),
            });
        }
    }
    Archive {
        table,
        semantic,
        low,
        annotations,
        text,
    }
}

fn all_results(bundle: &ArchiveBundle, rng: &mut ChaCha8Rng) -> Vec<RankedResult> {
    let mut out = Vec::new();
    for _ in 0..10 {
        let shot = bundle.shots.shot(rng.gen_range(0..bundle.shots.len() as u32)).id();
        for alpha in [1.0, 0.0, 0.5] {
            out.push(
                shotindex_core::similarity::query_by_shot(&bundle.similarity, &shot, 2, alpha, 50, DEFAULT_SHORTLIST)
                    .unwrap(),
            );
        }
    }
    out.push(
        bundle
            .postings
            .concept_search("crowd", AnnotationKind::Concept, 100)
            .unwrap(),
    );
    out.push(
        bundle
            .postings
            .concept_search("Erich Honecker", AnnotationKind::Person, 100)
            .unwrap(),
    );
    out.push(bundle.vocabulary.text_search("Strasse kombinat", 100).unwrap());
    out
}

fn formats() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let archive = small_archive(&mut rng);
    let mut problems: Vec<String> = Vec::new();

    // Text and binary round trips.
    let manifest = write_manifest(&archive.table);
    let table2 = parse_manifest(&manifest).unwrap();
    if write_manifest(&table2) != manifest || table2.keyframes() != archive.table.keyframes() {
        problems.push("manifest".into());
    }
    let records = archive.semantic.to_records(&archive.table);
    let codes = write_codes(CodeSpace::Semantic, &records);
    if parse_codes(&codes, CodeSpace::Semantic, &archive.table).unwrap() != records {
        problems.push("codes".into());
    }
    let annotations = write_annotations(&archive.annotations);
    if parse_annotations(&annotations, &archive.table).unwrap() != archive.annotations {
        problems.push("annotations".into());
    }
    let text = write_text(&archive.text);
    if parse_text(&text, &archive.table).unwrap() != archive.text {
        problems.push("text".into());
    }

    // Snapshots reload to identical kNN behavior.
    let checksum = [7u8; 32];
    let tree = VpTree::build(&archive.semantic, 5).unwrap();
    let snapshot = write_snapshot(&tree, CodeSpace::Semantic, &checksum);
    let reloaded = read_snapshot(&snapshot, &archive.semantic, &checksum).unwrap();
    for _ in 0..200 {
        let q = Code64(rng.gen());
        let k = rng.gen_range(1..300);
        if tree.knn64(q, k).unwrap() != reloaded.knn64(q, k).unwrap() {
            problems.push("snapshot knn".into());
            break;
        }
    }
    if write_snapshot(&reloaded, CodeSpace::Semantic, &checksum) != snapshot {
        problems.push("snapshot bytes".into());
    }

    // A bundle written to disk answers exactly like one built in memory.
    let dir = tempfile::tempdir().unwrap();
    let raw = dir.path().join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    let put = |name: &str, bytes: &[u8]| {
        std::fs::write(raw.join(name), bytes).unwrap();
        raw.join(name)
    };
    let inputs = IngestInputs {
        manifest: put("manifest.tsv", manifest.as_bytes()),
        semantic_codes: Some(put("semantic.shgc", &codes)),
        low_level_codes: Some(put(
            "low.shgc",
            &write_codes(CodeSpace::LowLevel, &archive.low.to_records(&archive.table)),
        )),
        annotations: Some(put("annotations.tsv", annotations.as_bytes())),
        text: Some(put("text.tsv", text.as_bytes())),
        ..Default::default()
    };
    let bundle_dir = dir.path().join("bundle");
    ingest_archive(&inputs, &bundle_dir).unwrap();
    build_bundle(&bundle_dir, 31).unwrap();
    let on_disk = ArchiveBundle::load(&bundle_dir).unwrap();
    let in_memory = ArchiveBundle::from_parts(
        archive.table.clone(),
        archive.semantic.clone(),
        Some(archive.low.clone()),
        &archive.annotations,
        &archive.text,
        EncoderConfig::default(),
        31,
    )
    .unwrap();
    let seed: u64 = rng.gen();
    let disk_results = all_results(&on_disk, &mut ChaCha8Rng::seed_from_u64(seed));
    if disk_results != all_results(&in_memory, &mut ChaCha8Rng::seed_from_u64(seed)) {
        problems.push("bundle query behavior".into());
    }
    if on_disk.metadata.manifest_sha256 != in_memory.metadata.manifest_sha256 {
        problems.push("bundle checksum".into());
    }

    // Fuzzing: every malformed input must come back as an error value.
    let table = &archive.table;
    let store = &archive.semantic;
    let vectors = "v\t0\t0\t0.5,0.25\n".repeat(3);
    let judgments = "q1\tvideo-00\t0\nq1\tvideo-01\t2\n";
    let run = "q1\tvideo-00\t0\t0.9\nq1\tvideo-01\t2\t0.5\n";
    let text_of = |b: &[u8]| String::from_utf8_lossy(b).into_owned();
    let mut panics = 0;
    panics += fuzz(&mut rng, manifest.as_bytes(), |b| {
        let _ = parse_manifest(&text_of(b));
    });
    panics += fuzz(&mut rng, &codes, |b| {
        let _ = parse_codes(b, CodeSpace::Semantic, table);
    });
    panics += fuzz(&mut rng, annotations.as_bytes(), |b| {
        let _ = parse_annotations(&text_of(b), table);
    });
    panics += fuzz(&mut rng, text.as_bytes(), |b| {
        let _ = parse_text(&text_of(b), table);
    });
    panics += fuzz(&mut rng, vectors.as_bytes(), |b| {
        let _ = parse_vectors(&text_of(b), table);
    });
    panics += fuzz(&mut rng, judgments.as_bytes(), |b| {
        let _ = parse_judgments(&text_of(b));
    });
    panics += fuzz(&mut rng, run.as_bytes(), |b| {
        let _ = parse_run(&text_of(b));
    });
    let mut accepted_snapshots = 0;
    panics += fuzz(&mut rng, &snapshot, |b| {
        if let Ok(t) = read_snapshot(b, store, &checksum) {
            accepted_snapshots += 1;
            let _ = t.knn64(Code64(0), 10);
        }
    });
    let fuzzed = FUZZ_CASES * 8;

    // Structured errors for corrupted bundle files on load.
    let mut bundle_errors = 0;
    for file in ["semantic.shgt", "bundle.json", "semantic.shgc", "annotations.tsv"] {
        let path = bundle_dir.join(file);
        let original = std::fs::read(&path).unwrap();
        std::fs::write(&path, &original[..original.len() / 2]).unwrap();
        if catch_unwind(|| ArchiveBundle::load(&bundle_dir).is_err()).unwrap_or(false) {
            bundle_errors += 1;
        }
        std::fs::write(&path, &original).unwrap();
    }

    let round_trips_ok = problems.is_empty();
    outcome(
        round_trips_ok && panics == 0 && bundle_errors == 4,
        format!(
            "round_trips={} fuzzed_inputs={fuzzed} panics={panics} corrupted_bundle_files_rejected={bundle_errors}/4 \
             mutated_snapshots_accepted={accepted_snapshots}",
            if round_trips_ok {
                "ok".to_string()
            } else {
                problems.join(",")
            }
        ),
    )
}

// ---------------------------------------------------------------------------
// Text ranking

fn oracle_normalize(word: &str) -> String {
    let composed: String = word.nfc().collect();
    composed.to_lowercase().nfc().collect()
}

/// Full-matrix edit distance.
fn oracle_levenshtein(a: &[char], b: &[char]) -> usize {
    let mut m = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in m.iter_mut().enumerate() {
        row[0] = i;
    }
    m[0] = (0..=b.len()).collect();
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let sub = m[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1]);
            m[i][j] = sub.min(m[i - 1][j] + 1).min(m[i][j - 1] + 1);
        }
    }
    m[a.len()][b.len()]
}

fn oracle_similarity(a: &str, b: &str) -> f64 {
    let (a, b): (Vec<char>, Vec<char>) = (a.chars().collect(), b.chars().collect());
    let longest = a.len().max(b.len());
    if longest == 0 {
        1.0
    } else {
        1.0 - oracle_levenshtein(&a, &b) as f64 / longest as f64
    }
}

fn oracle_text_search(occurrences: &[TextOccurrence], query: &str, k: usize) -> Vec<(ShotId, f64)> {
    let tokens: Vec<String> = query.split_whitespace().map(oracle_normalize).collect();
    let mut by_shot: BTreeMap<ShotId, Vec<String>> = BTreeMap::new();
    for o in occurrences {
        by_shot
            .entry(o.shot.clone())
            .or_default()
            .push(oracle_normalize(&o.word));
    }
    let mut ranked: Vec<(ShotId, f64)> = by_shot
        .into_iter()
        .map(|(shot, words)| {
            let sum: f64 = tokens
                .iter()
                .map(|t| words.iter().map(|w| oracle_similarity(t, w)).fold(0.0, f64::max))
                .sum();
            (shot, sum / tokens.len() as f64)
        })
        .filter(|(_, s)| *s >= 0.6)
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

fn vocabulary_word(rng: &mut ChaCha8Rng) -> String {
    const SYLLABLES: &[&str] = &[
        "ber", "lin", "stra", "ße", "über", "schrift", "plan", "er", "fül", "lung", "kom", "bi", "nat", "volk", "ei",
        "gen", "ar", "bei", "ter", "grü", "ße", "mö", "bel", "hä", "fen", "zug",
    ];
    let n = rng.gen_range(1..5);
    let mut w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
    if rng.gen_bool(0.2) {
        w = w.to_uppercase();
    }
    w
}

/// One edit of `word`, favoring umlaut substitutions and decomposed forms.
fn perturb(rng: &mut ChaCha8Rng, word: &str) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let swaps = [('ä', 'a'), ('ö', 'o'), ('ü', 'u'), ('a', 'ä'), ('o', 'ö'), ('u', 'ü')];
    match rng.gen_range(0..5) {
        0 => {
            if let Some(i) = chars.iter().position(|c| swaps.iter().any(|s| s.0 == *c)) {
                chars[i] = swaps.iter().find(|s| s.0 == chars[i]).unwrap().1;
            }
        }
        1 if !chars.is_empty() => {
            chars.remove(rng.gen_range(0..chars.len()));
        }
        2 => chars.insert(rng.gen_range(0..=chars.len()), 'x'),
        3 => return word.nfd().collect::<String>().to_uppercase(),
        _ => {}
    }
    chars.into_iter().collect()
}

fn text_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let mut queries = 0;
    let mut mismatches = 0;
    let mut umlaut_queries = 0;
    for _ in 0..10 {
        let mut words: Vec<String> = Vec::new();
        let mut seen = HashSet::new();
        while words.len() < 500 {
            let w = vocabulary_word(&mut rng);
            if seen.insert(oracle_normalize(&w)) {
                words.push(w);
            }
        }
        let occurrences: Vec<TextOccurrence> = (0..1500)
            .map(|i| TextOccurrence {
                shot: ShotId::new(format!("v{}", i % 7), (i % 211) as u32),
                frame_number: i as u64,
                word: words.choose(&mut rng).unwrap().clone(),
            })
            .collect();
        let vocab = Vocabulary::build(&occurrences);
        for q in 0..40 {
            let base = words.choose(&mut rng).unwrap();
            let mut query = perturb(&mut rng, base);
            if q % 4 == 0 {
                query.push(' ');
                let second = words.choose(&mut rng).unwrap();
                query.push_str(&perturb(&mut rng, second));
            }
            if query.trim().is_empty() {
                continue;
            }
            if query.chars().any(|c| "äöüÄÖÜ".contains(c)) || query.nfc().collect::<String>() != query {
                umlaut_queries += 1;
            }
            let k = [1, 10, 50][q % 3];
            let got: Vec<(ShotId, f64)> = vocab
                .text_search(&query, k)
                .unwrap()
                .entries
                .into_iter()
                .map(|e| (e.shot, e.score))
                .collect();
            if got != oracle_text_search(&occurrences, &query, k) {
                mismatches += 1;
            }
            queries += 1;
        }
    }
    // Hand case: a single umlaut edit on a 13-letter word.
    let hand = Vocabulary::build(&[TextOccurrence {
        shot: ShotId::new("a", 0),
        frame_number: 0,
        word: "Planerfüllung".into(),
    }])
    .text_search("planerfullung", 1)
    .unwrap();
    let hand_ok = hand.entries.len() == 1 && (hand.entries[0].score - (1.0 - 1.0 / 13.0)).abs() < 1e-15;
    outcome(
        mismatches == 0 && hand_ok,
        format!(
            "vocabularies=10x500 queries={queries} umlaut_or_decomposed={umlaut_queries} mismatches={mismatches} \
             umlaut_hand_case={hand_ok}"
        ),
    )
}
