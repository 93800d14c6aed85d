//! Reproducible trace generators and the on-disk trace format.
//!
//! Format: JSON Lines. A header line
//!   {"format":"dynlab-trace/1","variant":"minsum"}
//! followed by one batch per line:
//!   {"t":3,"items":[{"id":"a","w":"3/7","key":"k","ts":5,"exp":9,"tw":"1/7"}]}
//! Weights are rational strings so nothing is rounded. Items in decreasing
//! traces carry their schedule as "dw":[[t,"p/q"],...]. The general variant
//! names its cost function in the header as "hook".

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    DecreasingSchedule, GeneralCost, ItemSpec, Time, Trace, TraceBuilder, Variant,
};
use crate::rng::XorShift64Star;
use crate::weight::Weight;

pub const FORMAT_TAG: &str = "dynlab-trace/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    variant: Variant,
    #[serde(skip_serializing_if = "Option::is_none")]
    hook: Option<GeneralCost>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ItemLine {
    id: String,
    w: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    key: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ts: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    exp: Option<Time>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tw: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    dw: Option<Vec<(Time, String)>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct BatchLine {
    t: Time,
    items: Vec<ItemLine>,
}

pub fn write_trace_to(trace: &Trace, sink: &mut dyn Write) -> Result<()> {
    let header = Header {
        format: FORMAT_TAG.to_string(),
        variant: trace.variant,
        hook: trace.general_hook,
    };
    serde_json::to_writer(&mut *sink, &header).map_err(io_err)?;
    sink.write_all(b"\n")?;
    for b in &trace.batches {
        let items = b
            .items
            .iter()
            .map(|&id| {
                let m = trace.item(id);
                ItemLine {
                    id: m.token.clone(),
                    w: m.weight.to_string(),
                    key: m.key.clone(),
                    ts: m.ts,
                    exp: m.expiry,
                    tw: m.tombstone_weight.as_ref().map(|w| w.to_string()),
                    dw: trace.decreasing.as_ref().and_then(|s| {
                        s.breakpoints(id).map(|bps| {
                            bps.iter().map(|(t, w)| (*t, w.to_string())).collect()
                        })
                    }),
                }
            })
            .collect();
        serde_json::to_writer(&mut *sink, &BatchLine { t: b.time, items }).map_err(io_err)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_trace(trace: &Trace, path: &Path) -> Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    write_trace_to(trace, &mut file)?;
    file.flush()?;
    Ok(())
}

fn io_err(e: serde_json::Error) -> Error {
    Error::Validation(format!("serialization failed: {}", e))
}

pub fn read_trace_from(source: &mut dyn Read) -> Result<Trace> {
    let reader = BufReader::new(source);
    let mut lines = reader.lines().enumerate();
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            detail: "empty trace file".into(),
        })?;
    let header_line = header_line?;
    let header: Header = serde_json::from_str(&header_line).map_err(|e| Error::Parse {
        line: 1,
        detail: format!("bad header: {}", e),
    })?;
    if header.format != FORMAT_TAG {
        return Err(Error::Parse {
            line: 1,
            detail: format!("unsupported format {:?}", header.format),
        });
    }
    let mut builder = TraceBuilder::new(header.variant);
    if let Some(hook) = header.hook {
        builder = builder.general_hook(hook);
    }
    let mut schedule = DecreasingSchedule::new();
    let mut expect_t: Time = 1;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let batch: BatchLine = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            detail: format!("{}", e),
        })?;
        if batch.t != expect_t {
            return Err(Error::Parse {
                line: lineno,
                detail: format!("batch time {} out of order, expected {}", batch.t, expect_t),
            });
        }
        expect_t += 1;
        let mut specs = Vec::with_capacity(batch.items.len());
        let mut schedules = Vec::new();
        for item in batch.items {
            let weight: Weight = item.w.parse().map_err(|e| Error::Parse {
                line: lineno,
                detail: format!("item {:?}: {}", item.id, e),
            })?;
            let tombstone_weight = match item.tw {
                Some(tw) => Some(tw.parse().map_err(|e| Error::Parse {
                    line: lineno,
                    detail: format!("item {:?} tombstone: {}", item.id, e),
                })?),
                None => None,
            };
            if let Some(dw) = item.dw {
                let mut bps = Vec::with_capacity(dw.len());
                for (t, w) in dw {
                    bps.push((
                        t,
                        w.parse().map_err(|e: Error| Error::Parse {
                            line: lineno,
                            detail: format!("item {:?} schedule: {}", item.id, e),
                        })?,
                    ));
                }
                schedules.push((specs.len(), bps));
            }
            specs.push(ItemSpec {
                token: item.id,
                weight,
                key: item.key,
                ts: item.ts,
                expiry: item.exp,
                tombstone_weight,
            });
        }
        let ids = builder.push_batch(specs).map_err(|e| Error::Parse {
            line: lineno,
            detail: e.to_string(),
        })?;
        for (pos, bps) in schedules {
            schedule.set(ids[pos], bps);
        }
    }
    if !schedule.is_empty() {
        builder.set_schedule(schedule);
    }
    builder.finish()
}

pub fn read_trace(path: &Path) -> Result<Trace> {
    let mut file = File::open(path)?;
    read_trace_from(&mut file)
}

/// Workload shapes. Identical configuration yields a bit-identical trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum WorkloadConfig {
    /// n unit singleton batches.
    Uniform { n: Time },
    /// One batch of weight n^2, then n-1 batches of weight 2^-20.
    HeavyThenLight { n: Time },
    /// Batch sizes and weights drawn from a seeded generator; some steps are
    /// query-only. Weights are dyadic rationals in [1/2^wshift, 2^wmax].
    Bursty {
        n: Time,
        seed: u64,
        /// Probability numerator (out of 8) that a step carries items.
        fill8: u64,
        max_batch: u64,
    },
    /// Keyed items with Zipf-distributed keys, updates, tombstone-weighted
    /// deletes, and expirations.
    ZipfLsm {
        n: Time,
        seed: u64,
        keys: u64,
        /// Zipf skew numerator over 100 (s = skew100 / 100).
        skew100: u64,
        /// Per-mille rate of delete items (tombstone weight < weight).
        delete_pm: u64,
        /// Per-mille rate of items carrying an expiry.
        expire_pm: u64,
    },
}

impl WorkloadConfig {
    pub fn variant(&self) -> Variant {
        match self {
            WorkloadConfig::Uniform { .. } | WorkloadConfig::HeavyThenLight { .. } => {
                Variant::MinSum
            }
            WorkloadConfig::Bursty { .. } => Variant::KComponent,
            WorkloadConfig::ZipfLsm { .. } => Variant::Lsm,
        }
    }
}

pub fn gen_workload(config: &WorkloadConfig) -> Result<Trace> {
    let trace = match config {
        WorkloadConfig::Uniform { n } => {
            let mut b = TraceBuilder::new(Variant::MinSum);
            for i in 1..=*n {
                b.push_batch(vec![ItemSpec::new(format!("u{}", i), Weight::one())])?;
            }
            b.finish()?
        }
        WorkloadConfig::HeavyThenLight { n } => {
            if *n == 0 {
                return Err(Error::Validation("n must be positive".into()));
            }
            let mut b = TraceBuilder::new(Variant::MinSum);
            b.push_batch(vec![ItemSpec::new(
                "heavy",
                Weight::from_u64(n * n),
            )])?;
            let light = Weight::one().shl2(-20);
            for i in 2..=*n {
                b.push_batch(vec![ItemSpec::new(format!("l{}", i), light.clone())])?;
            }
            b.finish()?
        }
        WorkloadConfig::Bursty {
            n,
            seed,
            fill8,
            max_batch,
        } => {
            if *fill8 > 8 || *max_batch == 0 {
                return Err(Error::Validation("bursty knobs out of range".into()));
            }
            let mut rng = XorShift64Star::new(*seed);
            let mut b = TraceBuilder::new(Variant::KComponent);
            let mut serial = 0u64;
            for _ in 1..=*n {
                if rng.chance(*fill8, 8) {
                    let size = rng.range(1, *max_batch);
                    let mut items = Vec::with_capacity(size as usize);
                    for _ in 0..size {
                        serial += 1;
                        // Dyadic weight in (0, 2^6]: numer in [1, 64], shift
                        // in [0, 10].
                        let numer = rng.range(1, 64);
                        let shift = rng.range(0, 10) as i64;
                        let w = Weight::from_u64(numer).shl2(-shift);
                        items.push(ItemSpec::new(format!("b{}", serial), w));
                    }
                    b.push_batch(items)?;
                } else {
                    b.push_empty();
                }
            }
            b.finish()?
        }
        WorkloadConfig::ZipfLsm {
            n,
            seed,
            keys,
            skew100,
            delete_pm,
            expire_pm,
        } => {
            if *keys == 0 {
                return Err(Error::Validation("need at least one key".into()));
            }
            let mut rng = XorShift64Star::new(*seed);
            // Zipf sampling by inverse CDF over integer-scaled masses
            // floor(10^6 / rank^s) with s = skew100/100, rank 1..=keys.
            let mut cdf: Vec<u64> = Vec::with_capacity(*keys as usize);
            let mut acc = 0u64;
            for rank in 1..=*keys {
                let mass = zipf_mass(rank, *skew100);
                acc += mass.max(1);
                cdf.push(acc);
            }
            let mut b = TraceBuilder::new(Variant::Lsm);
            let mut serial = 0u64;
            for t in 1..=*n {
                if rng.chance(3, 4) {
                    let size = rng.range(1, 3);
                    let mut items = Vec::with_capacity(size as usize);
                    for _ in 0..size {
                        serial += 1;
                        let pick = rng.below(acc) + 1;
                        let rank = cdf.partition_point(|&c| c < pick) as u64 + 1;
                        let numer = rng.range(1, 32);
                        let weight = Weight::from_u64(numer);
                        let mut spec =
                            ItemSpec::new(format!("z{}", serial), weight.clone());
                        spec.key = Some(format!("key{}", rank));
                        spec.ts = Some(serial);
                        if rng.chance(*delete_pm, 1000) {
                            // Tombstone-style insert: tiny weight of its own.
                            spec.weight = Weight::one();
                            spec.tombstone_weight = Some(Weight::one());
                        } else if rng.chance(*expire_pm, 1000) {
                            spec.expiry = Some(t + rng.range(1, 8));
                            let tw = Weight::from_u64(numer.min(rng.range(1, 8)));
                            spec.tombstone_weight = Some(tw);
                        }
                        items.push(spec);
                    }
                    b.push_batch(items)?;
                } else {
                    b.push_empty();
                }
            }
            b.finish()?
        }
    };
    trace.validate()?;
    Ok(trace)
}

fn zipf_mass(rank: u64, skew100: u64) -> u64 {
    // floor(10^6 / rank^(skew100/100)) computed in f-free integer form:
    // rank^(skew100/100) ~ exp2(skew100/100 * log2 rank); approximate with
    // fixed-point log2 to keep generation integer-only and portable.
    let log2_fp = ilog2_fixed(rank); // log2(rank) in 1/1024 units
    let exp_fp = log2_fp * skew100 / 100; // s*log2(rank) in 1/1024 units
    let whole = exp_fp / 1024;
    let frac = exp_fp % 1024;
    // 2^(whole + frac/1024) ~ 2^whole * (1 + frac/1024 * ln2 adjustment);
    // linear interpolation is plenty for workload shaping.
    let base = 1u64 << whole.min(40);
    let denom = base + base * frac / 1024;
    1_000_000 / denom.max(1)
}

fn ilog2_fixed(x: u64) -> u64 {
    if x <= 1 {
        return 0;
    }
    let whole = 63 - x.leading_zeros() as u64;
    let rem = x as u128 * 1024 / (1u128 << whole);
    whole * 1024 + (rem as u64 - 1024) // rem in [1024, 2048): linear frac part
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_is_unit_singletons() {
        let t = gen_workload(&WorkloadConfig::Uniform { n: 11 }).unwrap();
        assert_eq!(t.len(), 11);
        assert_eq!(t.nonempty_count(), 11);
        for b in &t.batches {
            assert_eq!(b.items.len(), 1);
            assert_eq!(t.item(b.items[0]).weight, Weight::one());
        }
    }

    #[test]
    fn heavy_then_light_shape() {
        let t = gen_workload(&WorkloadConfig::HeavyThenLight { n: 64 }).unwrap();
        assert_eq!(t.len(), 64);
        assert_eq!(t.item(t.batch(1).items[0]).weight, Weight::from_u64(4096));
        assert_eq!(
            t.item(t.batch(2).items[0]).weight,
            Weight::one().shl2(-20)
        );
    }

    #[test]
    fn same_config_same_trace() {
        let cfg = WorkloadConfig::Bursty {
            n: 40,
            seed: 99,
            fill8: 5,
            max_batch: 3,
        };
        let a = gen_workload(&cfg).unwrap();
        let b = gen_workload(&cfg).unwrap();
        let mut wa = Vec::new();
        let mut wb = Vec::new();
        write_trace_to(&a, &mut wa).unwrap();
        write_trace_to(&b, &mut wb).unwrap();
        assert_eq!(wa, wb);
    }

    #[test]
    fn round_trip_identity() {
        for cfg in [
            WorkloadConfig::Uniform { n: 7 },
            WorkloadConfig::Bursty {
                n: 30,
                seed: 3,
                fill8: 6,
                max_batch: 4,
            },
            WorkloadConfig::ZipfLsm {
                n: 25,
                seed: 17,
                keys: 6,
                skew100: 120,
                delete_pm: 150,
                expire_pm: 200,
            },
        ] {
            let t = gen_workload(&cfg).unwrap();
            let mut buf = Vec::new();
            write_trace_to(&t, &mut buf).unwrap();
            let back = read_trace_from(&mut buf.as_slice()).unwrap();
            let mut buf2 = Vec::new();
            write_trace_to(&back, &mut buf2).unwrap();
            assert_eq!(buf, buf2, "round trip for {:?}", cfg);
        }
    }

    #[test]
    fn rational_weights_parse_exactly() {
        let src = format!(
            "{}\n{}\n{}\n",
            r#"{"format":"dynlab-trace/1","variant":"minsum"}"#,
            r#"{"t":1,"items":[{"id":"a","w":"3/7"}]}"#,
            r#"{"t":2,"items":[]}"#,
        );
        let t = read_trace_from(&mut src.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert!(t.batch(2).is_empty());
        assert_eq!(
            t.item(t.batch(1).items[0]).weight,
            Weight::from_ratio(3, 7).unwrap()
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let src = format!(
            "{}\n{}\n",
            r#"{"format":"dynlab-trace/1","variant":"minsum"}"#,
            r#"{"t":1,"items":[{"id":"a","w":"oops"}]}"#,
        );
        match read_trace_from(&mut src.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn nonmonotone_times_rejected() {
        let src = format!(
            "{}\n{}\n{}\n",
            r#"{"format":"dynlab-trace/1","variant":"minsum"}"#,
            r#"{"t":1,"items":[]}"#,
            r#"{"t":3,"items":[]}"#,
        );
        assert!(matches!(
            read_trace_from(&mut src.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
    }
}
