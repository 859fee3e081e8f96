//! One-shot neighborhood aggregation over the sampled subgraph.

use crate::error::{Error, Result};
use crate::features::FeatureMatrix;
use crate::graph::NodeType;
use crate::linalg::Matrix;
use crate::sampler::SampledSubgraph;
use crate::scalar::Scalar;

/// Mean neighbor feature per user and item, plus how many nodes were
/// aggregated to produce them.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborhoodFeatures<T> {
    pub users: Matrix<T>,
    pub items: Matrix<T>,
    pub aggregations: usize,
}

fn mean_into<T: Scalar>(table: &Matrix<T>, neighbors: &[u32], out: &mut [T], scratch: &mut Vec<u32>) {
    if neighbors.is_empty() {
        return;
    }
    scratch.clear();
    scratch.extend_from_slice(neighbors);
    scratch.sort_unstable();
    for &v in scratch.iter() {
        for (o, &x) in out.iter_mut().zip(table.row(v as usize)) {
            *o += x;
        }
    }
    let n = T::of(neighbors.len() as f64);
    for o in out {
        *o /= n;
    }
}

/// Elementwise mean of sampled neighbors' features; zero for nodes with no
/// neighbors. Neighbors are summed in ascending index order.
pub fn aggregate_neighborhood<T: Scalar>(features: &FeatureMatrix<T>, subgraph: &SampledSubgraph) -> Result<NeighborhoodFeatures<T>> {
    let dim = features.dim();
    let mut scratch = Vec::new();
    let mut aggregations = 0;
    let mut tables = Vec::with_capacity(2);
    for t in [NodeType::USER, NodeType::ITEM] {
        if (t.0 as usize) >= features.type_count() {
            return Err(Error::Shape(format!("no features for node type {}", t.0)));
        }
        let src = features.table(t);
        let lists = subgraph.of_type(t);
        if lists.node_count() != src.rows() {
            return Err(Error::Shape(format!(
                "subgraph has {} nodes of type {} but features have {}",
                lists.node_count(),
                t.0,
                src.rows()
            )));
        }
        let mut out = Matrix::zeros(src.rows(), dim);
        for i in 0..src.rows() {
            let nbrs = lists.neighbors(i as u32);
            if let Some(&bad) = nbrs.iter().find(|&&v| v as usize >= src.rows()) {
                return Err(Error::Shape(format!("neighbor {} of {}:{i} has no features", bad, t.0)));
            }
            mean_into(src, nbrs, out.row_mut(i), &mut scratch);
            aggregations += 1;
        }
        tables.push(out);
    }
    let items = tables.pop().unwrap();
    let users = tables.pop().unwrap();
    Ok(NeighborhoodFeatures {
        users,
        items,
        aggregations,
    })
}

/// `self ⊕ λ1·slice1 ⊕ λ2·slice2 ⊕ ...`
pub fn concat_features<T: Scalar>(self_features: &[T], slices: &[(T, &[T])]) -> Result<Vec<T>> {
    let m = self_features.len();
    let mut out = Vec::with_capacity(m * (1 + slices.len()));
    out.extend_from_slice(self_features);
    for (s, &(lambda, v)) in slices.iter().enumerate() {
        if v.len() != m {
            return Err(Error::Shape(format!(
                "slice {s} has length {} but self features have {m}",
                v.len()
            )));
        }
        out.extend(v.iter().map(|&x| lambda * x));
    }
    Ok(out)
}

/// Model inputs `X̄` for every user and item, computed once before training.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFeatures<T> {
    feature_dim: usize,
    slices: usize,
    users: Matrix<T>,
    items: Matrix<T>,
    aggregations: usize,
}

impl<T: Scalar> AggregatedFeatures<T> {
    /// Aggregates every slice subgraph once and concatenates the results
    /// after the raw features, each block scaled by its weight.
    pub fn build(features: &FeatureMatrix<T>, slices: &[(f64, &SampledSubgraph)]) -> Result<Self> {
        let m = features.dim();
        let mut aggregations = 0;
        let neighborhoods = slices
            .iter()
            .map(|&(lambda, sub)| {
                let n = aggregate_neighborhood(features, sub)?;
                aggregations += n.aggregations;
                Ok((T::of(lambda), n))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut tables = Vec::with_capacity(2);
        for t in [NodeType::USER, NodeType::ITEM] {
            let src = features.table(t);
            let mut out = Matrix::zeros(src.rows(), m * (1 + slices.len()));
            for i in 0..src.rows() {
                let parts: Vec<(T, &[T])> = neighborhoods
                    .iter()
                    .map(|(l, n)| (*l, if t == NodeType::USER { n.users.row(i) } else { n.items.row(i) }))
                    .collect();
                out.row_mut(i)
                    .copy_from_slice(&concat_features(src.row(i), &parts)?);
            }
            tables.push(out);
        }
        let items = tables.pop().unwrap();
        let users = tables.pop().unwrap();
        Ok(AggregatedFeatures {
            feature_dim: m,
            slices: slices.len(),
            users,
            items,
            aggregations,
        })
    }

    pub fn from_tables(feature_dim: usize, slices: usize, users: Matrix<T>, items: Matrix<T>) -> Result<Self> {
        let d = feature_dim * (1 + slices);
        if users.cols() != d || items.cols() != d {
            return Err(Error::Shape(format!("input tables must have {d} columns")));
        }
        Ok(AggregatedFeatures {
            feature_dim,
            slices,
            users,
            items,
            aggregations: 0,
        })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn input_dim(&self) -> usize {
        self.users.cols()
    }

    pub fn users(&self) -> &Matrix<T> {
        &self.users
    }

    pub fn items(&self) -> &Matrix<T> {
        &self.items
    }

    /// Number of node aggregations executed to build these inputs.
    pub fn aggregations(&self) -> usize {
        self.aggregations
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureMatrix;
    use crate::sampler::{NeighborLists, SelectionMode, Strategy};

    fn subgraph(users: Vec<Vec<u32>>, items: Vec<Vec<u32>>) -> SampledSubgraph {
        let wrap = |l: Vec<Vec<u32>>| NeighborLists::from_lists(l.into_iter().map(|v| v.into_iter().map(|x| (x, 0.0)).collect()).collect());
        SampledSubgraph {
            strategy: Strategy::Random,
            k: 4,
            mode: SelectionMode::TopK,
            seed: 0,
            metric: None,
            users: wrap(users),
            items: wrap(items),
        }
    }

    fn features(users: Vec<f64>, items: Vec<f64>, m: usize) -> FeatureMatrix<f64> {
        FeatureMatrix::from_tables(vec![
            Matrix::from_vec(users.len() / m, m, users).unwrap(),
            Matrix::from_vec(items.len() / m, m, items).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn aggregation_examples() {
        let f = features(vec![0.0, 0.0, 1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0], 2);
        let n = aggregate_neighborhood(&f, &subgraph(vec![vec![1, 2], vec![2], vec![]], vec![vec![]])).unwrap();
        assert_eq!(n.users.row(0), &[2.0, 3.0]);
        assert_eq!(n.users.row(1), &[3.0, 4.0]);
        assert_eq!(n.users.row(2), &[0.0, 0.0]);
        assert_eq!(n.items.row(0), &[0.0, 0.0]);
        assert_eq!(n.aggregations, 4);
    }

    #[test]
    fn aggregation_ignores_neighbor_order() {
        let f = features(vec![0.1, 0.7, 0.3, 1e-8, 1e8, 0.2, 0.9, 0.4], vec![1.0, 1.0], 2);
        let a = aggregate_neighborhood(&f, &subgraph(vec![vec![1, 2, 3], vec![], vec![], vec![]], vec![vec![]])).unwrap();
        let b = aggregate_neighborhood(&f, &subgraph(vec![vec![3, 1, 2], vec![], vec![], vec![]], vec![vec![]])).unwrap();
        assert_eq!(a.users.row(0).iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.users.row(0).iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn concat_examples() {
        assert_eq!(concat_features(&[1.0, 1.0], &[(1.0, &[2.0, 4.0])]).unwrap(), vec![1.0, 1.0, 2.0, 4.0]);
        assert_eq!(concat_features(&[1.0, 1.0], &[(0.5, &[2.0, 4.0])]).unwrap()[2..], [1.0, 2.0]);
        assert_eq!(concat_features(&[1.0, 1.0], &[(1.0, &[2.0, 4.0]), (1.0, &[0.0, 0.0])]).unwrap().len(), 6);
        assert!(concat_features(&[1.0, 1.0], &[(1.0, &[2.0])]).is_err());
    }

    #[test]
    fn build_lays_out_self_then_neighborhood() {
        let f = features(vec![1.0, 1.0, 2.0, 4.0], vec![0.0, 1.0], 2);
        let s = subgraph(vec![vec![1], vec![]], vec![vec![]]);
        let agg = AggregatedFeatures::build(&f, &[(1.0, &s)]).unwrap();
        assert_eq!(agg.input_dim(), 4);
        assert_eq!(agg.users().row(0), &[1.0, 1.0, 2.0, 4.0]);
        assert_eq!(agg.users().row(1), &[2.0, 4.0, 0.0, 0.0]);
        assert_eq!(agg.aggregations(), 3);
    }
}
