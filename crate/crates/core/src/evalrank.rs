//! Hamming-ranking retrieval evaluation.
//!
//! The whole database is ordered by Hamming distance to each query, ties
//! broken by ascending database index. Average precision runs over the
//! full ordering; a database item is relevant when its label equals the
//! query's. Queries without any relevant item are left out of mAP and
//! precision-recall averages and reported separately.

use std::fmt::Write as _;

use crate::bitcode::BitCode;
use crate::dataio::CodeDatabase;
use crate::error::{Error, Result};

/// Number of differing bits.
pub fn hamming_distance(a: &BitCode, b: &BitCode) -> Result<u32> {
    a.check_len(b)?;
    Ok(a.xor_count(b))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankingResult {
    /// Database indices, nearest first.
    pub order: Vec<usize>,
    /// Distance of each entry of `order`.
    pub distances: Vec<u32>,
    /// Whether each entry of `order` shares the query label.
    pub relevant: Vec<bool>,
}

impl RankingResult {
    pub fn relevant_count(&self) -> usize {
        self.relevant.iter().filter(|&&r| r).count()
    }
}

/// Orders `db` by distance to `query` with a counting sort over the
/// `K + 1` possible distances, which keeps ties in index order.
pub fn rank_database(
    query: &BitCode,
    query_label: u32,
    db: &CodeDatabase,
) -> Result<RankingResult> {
    if query.len() != db.bits() {
        return Err(Error::dim(format!(
            "query has {} bits, database has {}",
            query.len(),
            db.bits()
        )));
    }
    let dist: Vec<u32> = db.codes().iter().map(|c| query.xor_count(c)).collect();
    let mut start = vec![0usize; db.bits() + 2];
    for &d in &dist {
        start[d as usize + 1] += 1;
    }
    for k in 1..start.len() {
        start[k] += start[k - 1];
    }
    let mut order = vec![0usize; dist.len()];
    for (i, &d) in dist.iter().enumerate() {
        order[start[d as usize]] = i;
        start[d as usize] += 1;
    }
    let distances = order.iter().map(|&i| dist[i]).collect();
    let relevant = order
        .iter()
        .map(|&i| db.labels()[i] == query_label)
        .collect();
    Ok(RankingResult {
        order,
        distances,
        relevant,
    })
}

/// Mean of precision at the rank of each relevant item; `None` when no
/// item is relevant.
pub fn average_precision(result: &RankingResult) -> Option<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &rel) in result.relevant.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    (hits > 0).then(|| sum / hits as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapReport {
    pub map: f64,
    /// Per-query AP; `None` for excluded queries.
    pub per_query: Vec<Option<f64>>,
    /// Queries with no relevant database item.
    pub excluded: Vec<usize>,
}

fn check_pair(queries: &CodeDatabase, db: &CodeDatabase) -> Result<()> {
    if queries.bits() != db.bits() {
        return Err(Error::dim(format!(
            "queries have {} bits, database has {}",
            queries.bits(),
            db.bits()
        )));
    }
    Ok(())
}

pub fn evaluate_map(queries: &CodeDatabase, db: &CodeDatabase) -> Result<MapReport> {
    check_pair(queries, db)?;
    let mut per_query = Vec::with_capacity(queries.len());
    let mut excluded = Vec::new();
    for (q, (code, &label)) in queries.codes().iter().zip(queries.labels()).enumerate() {
        let ap = average_precision(&rank_database(code, label, db)?);
        if ap.is_none() {
            excluded.push(q);
        }
        per_query.push(ap);
    }
    let valid: Vec<f64> = per_query.iter().flatten().copied().collect();
    if valid.is_empty() {
        return Err(Error::Evaluation(
            "no query has a relevant database item".into(),
        ));
    }
    Ok(MapReport {
        map: valid.iter().sum::<f64>() / valid.len() as f64,
        per_query,
        excluded,
    })
}

pub fn mean_average_precision(queries: &CodeDatabase, db: &CodeDatabase) -> Result<f64> {
    evaluate_map(queries, db).map(|r| r.map)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrPoint {
    /// Number of retrieved items, from 1.
    pub rank: usize,
    pub recall: f64,
    pub precision: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrCurve {
    pub points: Vec<PrPoint>,
    pub excluded: Vec<usize>,
}

/// Precision and recall after each rank cut, averaged over valid queries.
pub fn precision_recall(queries: &CodeDatabase, db: &CodeDatabase) -> Result<PrCurve> {
    check_pair(queries, db)?;
    let n = db.len();
    let mut recall = vec![0.0; n];
    let mut precision = vec![0.0; n];
    let mut valid = 0usize;
    let mut excluded = Vec::new();
    for (q, (code, &label)) in queries.codes().iter().zip(queries.labels()).enumerate() {
        let result = rank_database(code, label, db)?;
        let total = result.relevant_count();
        if total == 0 {
            excluded.push(q);
            continue;
        }
        valid += 1;
        let mut hits = 0usize;
        for (r, &rel) in result.relevant.iter().enumerate() {
            hits += usize::from(rel);
            recall[r] += hits as f64 / total as f64;
            precision[r] += hits as f64 / (r + 1) as f64;
        }
    }
    if valid == 0 {
        return Err(Error::Evaluation(
            "no query has a relevant database item".into(),
        ));
    }
    let inv = 1.0 / valid as f64;
    let points = (0..n)
        .map(|r| PrPoint {
            rank: r + 1,
            recall: recall[r] * inv,
            precision: precision[r] * inv,
        })
        .collect();
    Ok(PrCurve { points, excluded })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapRow {
    pub method: String,
    pub bits: usize,
    pub map: f64,
}

/// `method,K,mAP` table.
pub fn map_csv(rows: &[MapRow]) -> String {
    let mut out = String::from("method,K,mAP\n");
    for r in rows {
        writeln!(out, "{},{},{:.6}", r.method, r.bits, r.map).expect("write to string");
    }
    out
}

/// `rank,recall,precision` table.
pub fn pr_csv(curve: &PrCurve) -> String {
    let mut out = String::from("rank,recall,precision\n");
    for p in &curve.points {
        writeln!(out, "{},{:.6},{:.6}", p.rank, p.recall, p.precision).expect("write to string");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hashloss::code_product;

    fn db(codes: &[&[i8]], labels: &[u32]) -> CodeDatabase {
        let codes: Vec<BitCode> = codes.iter().map(|s| BitCode::from_signs(s)).collect();
        CodeDatabase::new(codes[0].len(), codes, labels.to_vec()).unwrap()
    }

    #[test]
    fn distance_examples() {
        let a = BitCode::from_signs(&[1, 1, -1, 1]);
        let b = BitCode::from_signs(&[1, -1, -1, 1]);
        assert_eq!(hamming_distance(&a, &a).unwrap(), 0);
        assert_eq!(hamming_distance(&a, &a.complement()).unwrap(), 4);
        assert_eq!(hamming_distance(&a, &b).unwrap(), 1);
        assert_eq!(code_product::<f64>(&a, &b).unwrap(), 0.5);
        assert!(hamming_distance(&a, &BitCode::negative(3)).is_err());
    }

    #[test]
    fn ranking_ties_by_index() {
        let d = db(&[&[1, 1], &[-1, -1], &[1, -1], &[1, 1]], &[0, 1, 0, 1]);
        let r = rank_database(&BitCode::from_signs(&[1, 1]), 0, &d).unwrap();
        assert_eq!(r.order, vec![0, 3, 2, 1]);
        assert_eq!(r.distances, vec![0, 0, 1, 2]);
        assert_eq!(r.relevant, vec![true, false, true, false]);
        assert_eq!(average_precision(&r), Some((1.0 + 2.0 / 3.0) / 2.0));
    }

    #[test]
    fn single_item_and_empty() {
        let d = db(&[&[1, -1]], &[4]);
        let r = rank_database(&BitCode::from_signs(&[-1, 1]), 4, &d).unwrap();
        assert_eq!(r.order, vec![0]);
        assert_eq!(mean_average_precision(&d, &d).unwrap(), 1.0);
        let empty = CodeDatabase::new(2, vec![], vec![]).unwrap();
        let r = rank_database(&BitCode::negative(2), 0, &empty).unwrap();
        assert!(r.order.is_empty());
        assert_eq!(average_precision(&r), None);
        assert!(matches!(
            mean_average_precision(&d, &empty),
            Err(Error::Evaluation(_))
        ));
    }

    #[test]
    fn excluded_queries_are_reported() {
        let d = db(&[&[1, 1], &[-1, 1]], &[0, 0]);
        let q = db(&[&[1, 1], &[1, 1]], &[0, 3]);
        let rep = evaluate_map(&q, &d).unwrap();
        assert_eq!(rep.excluded, vec![1]);
        assert_eq!(rep.map, 1.0);
        assert_eq!(precision_recall(&q, &d).unwrap().excluded, vec![1]);
    }

    #[test]
    fn pr_hand_instance() {
        // Ranking of the query: indices 0 (R), 1 (N), 2 (R), 3 (N), 4 (N).
        let d = db(
            &[
                &[1, 1, 1],
                &[1, 1, -1],
                &[1, -1, -1],
                &[-1, -1, -1],
                &[-1, -1, -1],
            ],
            &[0, 1, 0, 1, 1],
        );
        let q = db(&[&[1, 1, 1]], &[0]);
        let c = precision_recall(&q, &d).unwrap();
        let got: Vec<(f64, f64)> = c.points.iter().map(|p| (p.recall, p.precision)).collect();
        let want = [
            (0.5, 1.0),
            (0.5, 0.5),
            (1.0, 2.0 / 3.0),
            (1.0, 0.5),
            (1.0, 0.4),
        ];
        for (g, w) in got.iter().zip(want) {
            assert!((g.0 - w.0).abs() < 1e-15 && (g.1 - w.1).abs() < 1e-15);
        }
        assert!(pr_csv(&c).starts_with("rank,recall,precision\n1,0.500000,1.000000\n"));
    }

    #[test]
    fn csv_layout() {
        let rows = [MapRow {
            method: "lsh".into(),
            bits: 12,
            map: 0.25,
        }];
        assert_eq!(map_csv(&rows), "method,K,mAP\nlsh,12,0.250000\n");
    }
}
