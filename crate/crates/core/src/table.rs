//! Dense tables over finite variables, stored row-major with the last
//! scope variable varying fastest.

use crate::graph::VertexId;

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub scope: Vec<VertexId>,
    pub cards: Vec<usize>,
    pub data: Vec<f64>,
}

impl Table {
    pub fn filled(scope: Vec<VertexId>, cards: Vec<usize>, value: f64) -> Self {
        let size = cards.iter().product();
        Table { scope, cards, data: vec![value; size] }
    }

    pub fn zeros(scope: Vec<VertexId>, cards: Vec<usize>) -> Self {
        Self::filled(scope, cards, 0.0)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides(&self.cards)
    }

    pub fn position(&self, v: VertexId) -> Option<usize> {
        self.scope.iter().position(|&w| w == v)
    }

    /// Decodes a flat index into an assignment of the scope.
    pub fn assignment(&self, index: usize) -> Vec<usize> {
        decode(index, &self.cards)
    }

    pub fn index_of(&self, assignment: &[usize]) -> usize {
        encode(assignment, &self.cards)
    }

    /// For each flat index of `self`, the flat index of the projection onto `sub`.
    /// Every variable of `sub` must occur in `self.scope`.
    pub fn projection(&self, sub: &[VertexId]) -> Vec<usize> {
        projection_map(&self.scope, &self.cards, sub)
    }

    /// Sums out every variable not in `sub`; the result has scope `sub` in the given order.
    pub fn marginalize_onto(&self, sub: &[VertexId]) -> Table {
        let cards: Vec<usize> = sub
            .iter()
            .map(|v| self.cards[self.position(*v).expect("variable not in scope")])
            .collect();
        let mut out = Table::zeros(sub.to_vec(), cards);
        let map = self.projection(sub);
        for (i, &x) in self.data.iter().enumerate() {
            out.data[map[i]] += x;
        }
        out
    }

    /// Maximizes out one variable.
    pub fn max_out(&self, v: VertexId) -> Table {
        let sub: Vec<VertexId> = self.scope.iter().copied().filter(|&w| w != v).collect();
        let cards: Vec<usize> = sub.iter().map(|w| self.cards[self.position(*w).unwrap()]).collect();
        let mut out = Table::filled(sub.clone(), cards, f64::NEG_INFINITY);
        let map = self.projection(&sub);
        for (i, &x) in self.data.iter().enumerate() {
            if x > out.data[map[i]] {
                out.data[map[i]] = x;
            }
        }
        out
    }

    /// Maximum absolute difference, after matching scopes by projection.
    pub fn max_abs_diff(&self, other: &Table) -> f64 {
        let map = other.projection(&self.scope);
        let mut back = vec![0usize; self.len()];
        for (i, &j) in map.iter().enumerate() {
            back[j] = i;
        }
        self.data
            .iter()
            .enumerate()
            .map(|(i, &x)| (x - other.data[back[i]]).abs())
            .fold(0.0, f64::max)
    }
}

pub fn strides(cards: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; cards.len()];
    for i in (0..cards.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * cards[i + 1];
    }
    s
}

pub fn decode(mut index: usize, cards: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize; cards.len()];
    for i in (0..cards.len()).rev() {
        out[i] = index % cards[i];
        index /= cards[i];
    }
    out
}

pub fn encode(assignment: &[usize], cards: &[usize]) -> usize {
    let mut idx = 0;
    for (x, c) in assignment.iter().zip(cards) {
        debug_assert!(x < c);
        idx = idx * c + x;
    }
    idx
}

pub fn projection_map(scope: &[VertexId], cards: &[usize], sub: &[VertexId]) -> Vec<usize> {
    let sub_cards: Vec<usize> = sub
        .iter()
        .map(|v| cards[scope.iter().position(|w| w == v).expect("variable not in scope")])
        .collect();
    let sub_strides = strides(&sub_cards);
    let mut weight = vec![0usize; scope.len()];
    for (k, v) in sub.iter().enumerate() {
        let pos = scope.iter().position(|w| w == v).unwrap();
        weight[pos] = sub_strides[k];
    }
    let size: usize = cards.iter().product();
    let mut out = Vec::with_capacity(size);
    let mut digits = vec![0usize; scope.len()];
    let mut current = 0usize;
    for _ in 0..size {
        out.push(current);
        for i in (0..scope.len()).rev() {
            digits[i] += 1;
            current += weight[i];
            if digits[i] < cards[i] {
                break;
            }
            current -= weight[i] * digits[i];
            digits[i] = 0;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn marginal_of_product_table() {
        let t = Table { scope: vec![3, 5], cards: vec![2, 3], data: vec![1., 2., 3., 4., 5., 6.] };
        assert_eq!(t.marginalize_onto(&[3]).data, vec![6., 15.]);
        assert_eq!(t.marginalize_onto(&[5]).data, vec![5., 7., 9.]);
        assert_eq!(t.marginalize_onto(&[5, 3]).data, vec![1., 4., 2., 5., 3., 6.]);
        assert_eq!(t.marginalize_onto(&[]).data, vec![21.]);
    }

    #[test]
    fn encode_decode_roundtrip() {
        let cards = [2, 3, 4];
        for i in 0..24 {
            assert_eq!(encode(&decode(i, &cards), &cards), i);
        }
    }
}
