//! Descending hierarchical classification of context units.
//!
//! The binary presence matrix is split recursively: the initial cut of a
//! class is the sign of unit coordinates on the first correspondence-analysis
//! axis (dominant singular vector of the standardized-residual matrix, via
//! power iteration), then greedy single-unit moves climb the Pearson chi2 of
//! the 2 x vocabulary class-by-term table until no move improves. The class
//! with the most units is split next, until the requested number of terminal
//! classes is reached or nothing splittable remains.
//!
//! Everything is deterministic: fixed power-iteration seed (alternating +-1),
//! lowest-index tie-breaking, no randomness.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::corpus::Corpus;
use crate::prep::{ContextUnit, DocumentTermMatrix};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReinertError {
    #[error("unsplittable: fewer than two distinct unit patterns")]
    Unsplittable,
    #[error("max_terminal_classes must be >= 2")]
    BadClassCount,
    #[error("min_class_size must be >= 1")]
    BadMinClassSize,
}

const POWER_TOLERANCE: f64 = 1e-10;
const POWER_MAX_ITER: usize = 1000;
const CHI2_IMPROVEMENT_EPS: f64 = 1e-9;
/// Classes up to this size climb from every cut of the axis ordering; larger
/// ones keep only the sign split and the best pre-climb cut.
const EXHAUSTIVE_CUT_LIMIT: usize = 32;

/// Outcome of splitting one set of units in two.
#[derive(Debug, Clone, PartialEq)]
pub struct Bipartition {
    pub left: Vec<u32>,
    pub right: Vec<u32>,
    pub chi2: f64,
}

/// Internal working view: binary supports of the subset restricted to its
/// nonzero columns.
struct SubMatrix {
    /// Per subset row, active-column indices, sorted.
    supports: Vec<Vec<u32>>,
    /// Presence count per active column.
    col_presences: Vec<f64>,
    total_presences: f64,
}

fn submatrix(dtm: &DocumentTermMatrix, rows: &[u32]) -> SubMatrix {
    let mut col_count = vec![0u32; dtm.n_cols()];
    for &r in rows {
        for &(col, _) in &dtm.rows[r as usize] {
            col_count[col as usize] += 1;
        }
    }
    let mut active_of_col = vec![u32::MAX; dtm.n_cols()];
    let mut col_presences = Vec::new();
    for (col, &count) in col_count.iter().enumerate() {
        if count > 0 {
            active_of_col[col] = col_presences.len() as u32;
            col_presences.push(count as f64);
        }
    }
    let supports: Vec<Vec<u32>> = rows
        .iter()
        .map(|&r| {
            dtm.rows[r as usize].iter().map(|&(col, _)| active_of_col[col as usize]).collect()
        })
        .collect();
    let total_presences = col_presences.iter().sum();
    SubMatrix { supports, col_presences, total_presences }
}

/// Pearson chi2 of the 2 x V presence table induced by `side`, using the
/// identity chi2 = N (Q_a/R_a + Q_b/R_b) - N with Q_s = sum_j O_sj^2 / C_j.
struct Climber<'a> {
    sub: &'a SubMatrix,
    side: Vec<bool>,
    present_a: Vec<f64>,
    mass_a: f64,
    mass_b: f64,
    units_a: usize,
    units_b: usize,
    q_a: f64,
    q_b: f64,
}

impl<'a> Climber<'a> {
    fn new(sub: &'a SubMatrix, side: Vec<bool>) -> Self {
        let mut present_a = vec![0.0; sub.col_presences.len()];
        let mut mass_a = 0.0;
        let mut units_a = 0;
        for (i, on_a) in side.iter().enumerate() {
            if *on_a {
                units_a += 1;
                mass_a += sub.supports[i].len() as f64;
                for &j in &sub.supports[i] {
                    present_a[j as usize] += 1.0;
                }
            }
        }
        let mut climber = Climber {
            sub,
            side,
            present_a,
            mass_a,
            mass_b: sub.total_presences - mass_a,
            units_a,
            units_b: 0,
            q_a: 0.0,
            q_b: 0.0,
        };
        climber.units_b = climber.side.len() - units_a;
        let (q_a, q_b) = climber.recompute_q();
        climber.q_a = q_a;
        climber.q_b = q_b;
        climber
    }

    fn recompute_q(&self) -> (f64, f64) {
        let mut q_a = 0.0;
        let mut q_b = 0.0;
        for (j, &c_j) in self.sub.col_presences.iter().enumerate() {
            let a = self.present_a[j];
            let b = c_j - a;
            q_a += a * a / c_j;
            q_b += b * b / c_j;
        }
        (q_a, q_b)
    }

    fn chi2_of(&self, q_a: f64, q_b: f64, mass_a: f64, mass_b: f64) -> f64 {
        if mass_a <= 0.0 || mass_b <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.sub.total_presences * (q_a / mass_a + q_b / mass_b) - self.sub.total_presences
    }

    fn chi2(&self) -> f64 {
        self.chi2_of(self.q_a, self.q_b, self.mass_a, self.mass_b)
    }

    /// chi2 after moving unit `i` to the other side, in O(|support_i|).
    fn chi2_after_move(&self, i: usize) -> f64 {
        let support = &self.sub.supports[i];
        let m = support.len() as f64;
        let mut dq_a = 0.0;
        let mut dq_b = 0.0;
        if self.side[i] {
            if self.units_a == 1 {
                return f64::NEG_INFINITY;
            }
            for &j in support {
                let c_j = self.sub.col_presences[j as usize];
                let a = self.present_a[j as usize];
                let b = c_j - a;
                dq_a += (1.0 - 2.0 * a) / c_j;
                dq_b += (1.0 + 2.0 * b) / c_j;
            }
            self.chi2_of(self.q_a + dq_a, self.q_b + dq_b, self.mass_a - m, self.mass_b + m)
        } else {
            if self.units_b == 1 {
                return f64::NEG_INFINITY;
            }
            for &j in support {
                let c_j = self.sub.col_presences[j as usize];
                let a = self.present_a[j as usize];
                let b = c_j - a;
                dq_a += (1.0 + 2.0 * a) / c_j;
                dq_b += (1.0 - 2.0 * b) / c_j;
            }
            self.chi2_of(self.q_a + dq_a, self.q_b + dq_b, self.mass_a + m, self.mass_b - m)
        }
    }

    fn apply_move(&mut self, i: usize) {
        let m = self.sub.supports[i].len() as f64;
        if self.side[i] {
            for &j in &self.sub.supports[i] {
                let c_j = self.sub.col_presences[j as usize];
                let a = self.present_a[j as usize];
                let b = c_j - a;
                self.q_a += (1.0 - 2.0 * a) / c_j;
                self.q_b += (1.0 + 2.0 * b) / c_j;
                self.present_a[j as usize] -= 1.0;
            }
            self.mass_a -= m;
            self.mass_b += m;
            self.units_a -= 1;
            self.units_b += 1;
        } else {
            for &j in &self.sub.supports[i] {
                let c_j = self.sub.col_presences[j as usize];
                let a = self.present_a[j as usize];
                let b = c_j - a;
                self.q_a += (1.0 + 2.0 * a) / c_j;
                self.q_b += (1.0 - 2.0 * b) / c_j;
                self.present_a[j as usize] += 1.0;
            }
            self.mass_a += m;
            self.mass_b -= m;
            self.units_a += 1;
            self.units_b -= 1;
        }
        self.side[i] = !self.side[i];
    }
}

/// Row coordinates on the first CA axis of the binary submatrix, restricted
/// to rows with nonzero support. Returns `None` when the dominant axis is
/// numerically null.
fn ca_axis(sub: &SubMatrix, nonzero: &[usize]) -> Option<Vec<f64>> {
    let m = nonzero.len();
    let sqrt_w: Vec<f64> =
        nonzero.iter().map(|&i| (sub.supports[i].len() as f64).sqrt()).collect();
    let sqrt_n: Vec<f64> = sub.col_presences.iter().map(|&c| c.sqrt()).collect();
    let total = sub.total_presences;

    let mut v: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
    let norm = (m as f64).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);

    let mut y = vec![0.0; sub.col_presences.len()];
    let mut z = vec![0.0; m];
    for _ in 0..POWER_MAX_ITER {
        y.iter_mut().for_each(|x| *x = 0.0);
        let mut dot_w = 0.0;
        for (local, &i) in nonzero.iter().enumerate() {
            let coef = v[local] / sqrt_w[local];
            dot_w += sqrt_w[local] * v[local];
            for &j in &sub.supports[i] {
                y[j as usize] += coef;
            }
        }
        let mut dot_n = 0.0;
        for (j, val) in y.iter_mut().enumerate() {
            *val = *val / sqrt_n[j] - sqrt_n[j] * dot_w / total;
            dot_n += sqrt_n[j] * *val;
        }
        // y holds S^T v scaled by 1/sqrt_n already: reuse it for S y.
        for (local, &i) in nonzero.iter().enumerate() {
            let mut acc = 0.0;
            for &j in &sub.supports[i] {
                acc += y[j as usize] / sqrt_n[j as usize];
            }
            z[local] = acc / sqrt_w[local] - sqrt_w[local] * dot_n / total;
        }
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-30 {
            return None;
        }
        z.iter_mut().for_each(|x| *x /= norm);
        let mut diff_plus = 0.0f64;
        let mut diff_minus = 0.0f64;
        for (a, b) in z.iter().zip(&v) {
            diff_plus = diff_plus.max((a - b).abs());
            diff_minus = diff_minus.max((a + b).abs());
        }
        std::mem::swap(&mut v, &mut z);
        if diff_plus.min(diff_minus) < POWER_TOLERANCE {
            break;
        }
    }
    Some(v)
}

/// chi2-best prefix cut of the rows ordered along the CA axis, evaluated
/// incrementally in one pass over the supports. `order` holds positions into
/// `nonzero`; zero-support rows stay on side A throughout.
fn best_axis_cut(
    sub: &SubMatrix,
    nonzero: &[usize],
    order: &[usize],
    n_rows: usize,
) -> Option<Vec<bool>> {
    if order.len() < 2 {
        return None;
    }
    // Start with every nonzero row on side B (side A holds only zero rows,
    // which is not a valid split), then move rows across in axis order.
    let mut side = vec![true; n_rows];
    for &i in nonzero {
        side[i] = false;
    }
    let mut climber = Climber::new(sub, side);
    let mut best: Option<(usize, f64)> = None;
    for (cut, &local) in order.iter().enumerate().take(order.len() - 1) {
        climber.apply_move(nonzero[local]);
        let chi2 = climber.chi2();
        if chi2.is_finite() && best.is_none_or(|(_, b)| chi2 > b + CHI2_IMPROVEMENT_EPS) {
            best = Some((cut, chi2));
        }
    }
    let (best_cut, _) = best?;
    let mut side = vec![true; n_rows];
    for (pos, &local) in order.iter().enumerate() {
        side[nonzero[local]] = pos <= best_cut;
    }
    Some(side)
}

/// Split one unit set in two, maximizing the partition chi2.
pub fn bipartition(dtm: &DocumentTermMatrix, rows: &[u32]) -> Result<Bipartition, ReinertError> {
    if rows.len() < 2 {
        return Err(ReinertError::Unsplittable);
    }
    let sub = submatrix(dtm, rows);
    if sub.col_presences.len() < 2 {
        return Err(ReinertError::Unsplittable);
    }
    let nonzero: Vec<usize> =
        (0..rows.len()).filter(|&i| !sub.supports[i].is_empty()).collect();
    {
        let mut distinct = false;
        for window in nonzero.windows(2) {
            if sub.supports[window[0]] != sub.supports[window[1]] {
                distinct = true;
                break;
            }
        }
        if !distinct {
            return Err(ReinertError::Unsplittable);
        }
    }

    // Initial candidates from the first CA axis: the sign split plus cuts of
    // the axis ordering (every cut for small classes, otherwise the chi2-best
    // one), the classical alternative when the sign split sits in a shallow
    // basin. Zero-support rows carry no mass, so their placement never
    // changes chi2; they stay on side A.
    let mut candidates: Vec<Vec<bool>> = Vec::new();
    match ca_axis(&sub, &nonzero) {
        Some(coords) => {
            let mut sign_side = vec![true; rows.len()];
            for (local, &i) in nonzero.iter().enumerate() {
                sign_side[i] = coords[local] > 0.0;
            }
            let mut order: Vec<usize> = (0..nonzero.len()).collect();
            order.sort_by(|&a, &b| coords[a].partial_cmp(&coords[b]).unwrap().then(a.cmp(&b)));
            let on_a = sign_side.iter().filter(|s| **s).count();
            if on_a > 0 && on_a < rows.len() {
                candidates.push(sign_side);
            }
            if rows.len() <= EXHAUSTIVE_CUT_LIMIT {
                for cut in 0..order.len().saturating_sub(1) {
                    let mut side = vec![true; rows.len()];
                    for (pos, &local) in order.iter().enumerate() {
                        side[nonzero[local]] = pos <= cut;
                    }
                    candidates.push(side);
                }
            } else if let Some(cut_side) = best_axis_cut(&sub, &nonzero, &order, rows.len()) {
                candidates.push(cut_side);
            }
        }
        None => {
            let mut side = vec![true; rows.len()];
            for (pos, &i) in nonzero.iter().enumerate() {
                side[i] = pos % 2 == 0;
            }
            candidates.push(side);
        }
    }
    if candidates.is_empty() {
        return Err(ReinertError::Unsplittable);
    }

    let mut best: Option<(Vec<bool>, f64)> = None;
    for side in candidates {
        let mut climber = Climber::new(&sub, side);
        loop {
            let current = climber.chi2();
            let mut step: Option<(usize, f64)> = None;
            for i in 0..rows.len() {
                let candidate = climber.chi2_after_move(i);
                if candidate > current + CHI2_IMPROVEMENT_EPS
                    && step.is_none_or(|(_, b)| candidate > b)
                {
                    step = Some((i, candidate));
                }
            }
            match step {
                Some((i, _)) => climber.apply_move(i),
                None => break,
            }
        }
        // Exact recompute for the reported statistic.
        let (q_a, q_b) = climber.recompute_q();
        let chi2 = climber.chi2_of(q_a, q_b, climber.mass_a, climber.mass_b).max(0.0);
        if best.as_ref().is_none_or(|(_, b)| chi2 > b + CHI2_IMPROVEMENT_EPS) {
            best = Some((climber.side, chi2));
        }
    }
    let (side, chi2) = best.expect("at least one candidate");

    let mut left: Vec<u32> = Vec::new();
    let mut right: Vec<u32> = Vec::new();
    for (i, &r) in rows.iter().enumerate() {
        if side[i] {
            left.push(r);
        } else {
            right.push(r);
        }
    }
    if left.is_empty() || right.is_empty() {
        return Err(ReinertError::Unsplittable);
    }
    // Canonical child order: the smallest unit id goes left.
    if right.first() < left.first() {
        std::mem::swap(&mut left, &mut right);
    }
    Ok(Bipartition { left, right, chi2 })
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal { chi2: f64, size: usize, left: usize, right: usize },
    Leaf { units: Vec<u32>, class: Option<u32> },
}

/// Binary dendrogram of recursive bipartitions with terminal class
/// assignments.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTree {
    /// Arena; node 0 is the root.
    pub nodes: Vec<TreeNode>,
    /// Per DTM row: terminal class 1..=n_classes, or None when unclassified.
    pub assignment: Vec<Option<u32>>,
    pub n_classes: u32,
}

impl ClassTree {
    pub fn n_units(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_classified(&self) -> usize {
        self.assignment.iter().flatten().count()
    }

    /// Unit ids of each terminal class, indexed by class-1.
    pub fn class_units(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_classes as usize];
        for (unit, class) in self.assignment.iter().enumerate() {
            if let Some(c) = class {
                out[(c - 1) as usize].push(unit as u32);
            }
        }
        out
    }

    /// `unit,doc,class` rows; unclassified units get the literal
    /// `unclassified`.
    pub fn assignment_csv(&self, units: &[ContextUnit]) -> String {
        let mut out = String::from("unit,doc,class\n");
        for (i, class) in self.assignment.iter().enumerate() {
            let doc = units[i].parent_doc;
            match class {
                Some(c) => out.push_str(&format!("{i},{doc},{c}\n")),
                None => out.push_str(&format!("{i},{doc},unclassified\n")),
            }
        }
        out
    }
}

/// Descending hierarchical classification: recursive bipartition, largest
/// class first, until `max_terminal_classes` leaves exist or nothing left is
/// splittable. Terminal leaves smaller than `min_class_size` are reported
/// unclassified.
pub fn chd(
    dtm: &DocumentTermMatrix,
    max_terminal_classes: usize,
    min_class_size: usize,
) -> Result<ClassTree, ReinertError> {
    if max_terminal_classes < 2 {
        return Err(ReinertError::BadClassCount);
    }
    if min_class_size < 1 {
        return Err(ReinertError::BadMinClassSize);
    }

    let all_rows: Vec<u32> = (0..dtm.n_rows() as u32).collect();
    let mut nodes: Vec<TreeNode> = vec![TreeNode::Leaf { units: all_rows, class: None }];
    // Leaves still eligible for splitting, by node id.
    let mut splittable: Vec<usize> = vec![0];
    let mut n_leaves = 1usize;

    while n_leaves < max_terminal_classes {
        let Some(pick_pos) = splittable
            .iter()
            .enumerate()
            .filter(|(_, &node)| match &nodes[node] {
                TreeNode::Leaf { units, .. } => {
                    units.len() >= 2 * min_class_size && units.len() >= 2
                }
                TreeNode::Internal { .. } => unreachable!("splittable holds leaves"),
            })
            .max_by_key(|(_, &node)| match &nodes[node] {
                TreeNode::Leaf { units, .. } => (units.len(), std::cmp::Reverse(node)),
                TreeNode::Internal { .. } => unreachable!(),
            })
            .map(|(pos, _)| pos)
        else {
            break;
        };
        let node_id = splittable.remove(pick_pos);
        let TreeNode::Leaf { units, .. } = &nodes[node_id] else { unreachable!() };

        match bipartition(dtm, units) {
            Ok(split) => {
                let left_id = nodes.len();
                nodes.push(TreeNode::Leaf { units: split.left, class: None });
                let right_id = nodes.len();
                nodes.push(TreeNode::Leaf { units: split.right, class: None });
                let size = match &nodes[node_id] {
                    TreeNode::Leaf { units, .. } => units.len(),
                    TreeNode::Internal { .. } => unreachable!(),
                };
                nodes[node_id] =
                    TreeNode::Internal { chi2: split.chi2, size, left: left_id, right: right_id };
                splittable.push(left_id);
                splittable.push(right_id);
                n_leaves += 1;
            }
            Err(ReinertError::Unsplittable) if node_id != 0 => {
                // Keep the leaf terminal; just stop trying to split it.
            }
            Err(e) => return Err(e),
        }
    }

    // Depth-first, left-first numbering of surviving terminal classes.
    let mut assignment: Vec<Option<u32>> = vec![None; dtm.n_rows()];
    let mut next_class = 0u32;
    let mut class_of_leaf: BTreeMap<usize, Option<u32>> = BTreeMap::new();
    fn visit(
        nodes: &[TreeNode],
        node: usize,
        min_class_size: usize,
        next_class: &mut u32,
        class_of_leaf: &mut BTreeMap<usize, Option<u32>>,
    ) {
        match &nodes[node] {
            TreeNode::Internal { left, right, .. } => {
                visit(nodes, *left, min_class_size, next_class, class_of_leaf);
                visit(nodes, *right, min_class_size, next_class, class_of_leaf);
            }
            TreeNode::Leaf { units, .. } => {
                if units.len() >= min_class_size {
                    *next_class += 1;
                    class_of_leaf.insert(node, Some(*next_class));
                } else {
                    class_of_leaf.insert(node, None);
                }
            }
        }
    }
    visit(&nodes, 0, min_class_size, &mut next_class, &mut class_of_leaf);

    for (node_id, class) in &class_of_leaf {
        if let TreeNode::Leaf { units, class: slot } = &mut nodes[*node_id] {
            *slot = *class;
            if let Some(c) = class {
                for &u in units.iter() {
                    assignment[u as usize] = Some(*c);
                }
            }
        }
    }

    Ok(ClassTree { nodes, assignment, n_classes: next_class })
}

fn pearson_2x2(a: f64, b: f64, c: f64, d: f64) -> (f64, i8) {
    let n = a + b + c + d;
    let (r1, r2, c1, c2) = (a + b, c + d, a + c, b + d);
    if r1 == 0.0 || r2 == 0.0 || c1 == 0.0 || c2 == 0.0 {
        return (0.0, 0);
    }
    let delta = a * d - b * c;
    let chi2 = n * delta * delta / (r1 * r2 * c1 * c2);
    let expected_a = r1 * c1 / n;
    let sign = if a > expected_a {
        1
    } else if a < expected_a {
        -1
    } else {
        0
    };
    (chi2, sign)
}

/// chi2 association of each term with each terminal class (class vs rest,
/// presence vs absence). Plain Pearson, no continuity correction;
/// unclassified units excluded.
#[derive(Debug, Clone)]
pub struct ClassProfile {
    pub entries: Vec<TermAssociation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TermAssociation {
    pub class: u32,
    pub term: String,
    pub chi2: f64,
    pub sign: i8,
}

pub fn class_term_profile(tree: &ClassTree, dtm: &DocumentTermMatrix) -> ClassProfile {
    let n_classes = tree.n_classes as usize;
    let classified: Vec<(usize, u32)> = tree
        .assignment
        .iter()
        .enumerate()
        .filter_map(|(unit, class)| class.map(|c| (unit, c - 1)))
        .collect();
    let n_total = classified.len() as f64;

    let mut class_sizes = vec![0.0f64; n_classes];
    let mut present = vec![0.0f64; n_classes * dtm.n_cols()];
    let mut present_total = vec![0.0f64; dtm.n_cols()];
    for &(unit, class) in &classified {
        class_sizes[class as usize] += 1.0;
        for &(col, _) in &dtm.rows[unit] {
            present[class as usize * dtm.n_cols() + col as usize] += 1.0;
            present_total[col as usize] += 1.0;
        }
    }

    let mut entries = Vec::with_capacity(n_classes * dtm.n_cols());
    for class in 0..n_classes {
        for col in 0..dtm.n_cols() {
            let a = present[class * dtm.n_cols() + col];
            let b = class_sizes[class] - a;
            let c = present_total[col] - a;
            let d = (n_total - class_sizes[class]) - c;
            let (chi2, sign) = pearson_2x2(a, b, c, d);
            entries.push(TermAssociation {
                class: class as u32 + 1,
                term: dtm.vocab[col].clone(),
                chi2,
                sign,
            });
        }
    }
    ClassProfile { entries }
}

/// chi2 association of each (variable, modality) with each terminal class.
/// Units inherit their parent document's variables, so injected
/// pseudo-variables are profiled exactly like native ones.
#[derive(Debug, Clone)]
pub struct VariableProfile {
    pub entries: Vec<VariableAssociation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableAssociation {
    pub class: u32,
    pub variable: String,
    pub modality: String,
    pub chi2: f64,
    pub sign: i8,
}

pub fn class_variable_profile(
    tree: &ClassTree,
    units: &[ContextUnit],
    corpus: &Corpus,
) -> VariableProfile {
    let n_classes = tree.n_classes as usize;
    let classified: Vec<(usize, u32)> = tree
        .assignment
        .iter()
        .enumerate()
        .filter_map(|(unit, class)| class.map(|c| (unit, c - 1)))
        .collect();
    let n_total = classified.len() as f64;
    let mut class_sizes = vec![0.0f64; n_classes];
    for &(_, class) in &classified {
        class_sizes[class as usize] += 1.0;
    }

    let mut entries = Vec::new();
    for (variable, modalities) in &corpus.variable_catalog {
        for modality in modalities {
            let mut per_class = vec![0.0f64; n_classes];
            let mut total = 0.0f64;
            for &(unit, class) in &classified {
                let doc = &corpus.documents[units[unit].parent_doc];
                if doc.variables.get(variable) == Some(modality) {
                    per_class[class as usize] += 1.0;
                    total += 1.0;
                }
            }
            for class in 0..n_classes {
                let a = per_class[class];
                let b = class_sizes[class] - a;
                let c = total - a;
                let d = (n_total - class_sizes[class]) - c;
                let (chi2, sign) = pearson_2x2(a, b, c, d);
                entries.push(VariableAssociation {
                    class: class as u32 + 1,
                    variable: variable.clone(),
                    modality: modality.clone(),
                    chi2,
                    sign,
                });
            }
        }
    }
    VariableProfile { entries }
}

fn sign_str(sign: i8) -> &'static str {
    match sign {
        1 => "+",
        -1 => "-",
        _ => "0",
    }
}

/// `class,term,chi2,sign`, sorted by class then decreasing chi2 then term.
pub fn class_profiles_csv(profile: &ClassProfile) -> String {
    let mut entries: Vec<&TermAssociation> = profile.entries.iter().collect();
    entries.sort_by(|a, b| {
        a.class
            .cmp(&b.class)
            .then_with(|| b.chi2.partial_cmp(&a.chi2).unwrap())
            .then_with(|| a.term.cmp(&b.term))
    });
    let mut out = String::from("class,term,chi2,sign\n");
    for e in entries {
        out.push_str(&format!("{},{},{},{}\n", e.class, e.term, e.chi2, sign_str(e.sign)));
    }
    out
}

/// `class,variable,modality,chi2,sign`, sorted by class then decreasing chi2.
pub fn variable_profiles_csv(profile: &VariableProfile) -> String {
    let mut entries: Vec<&VariableAssociation> = profile.entries.iter().collect();
    entries.sort_by(|a, b| {
        a.class
            .cmp(&b.class)
            .then_with(|| b.chi2.partial_cmp(&a.chi2).unwrap())
            .then_with(|| a.variable.cmp(&b.variable))
            .then_with(|| a.modality.cmp(&b.modality))
    });
    let mut out = String::from("class,variable,modality,chi2,sign\n");
    for e in entries {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            e.class, e.variable, e.modality, e.chi2,
            sign_str(e.sign)
        ));
    }
    out
}

/// DOT rendering of the dendrogram. Terminal nodes carry their class number,
/// size, and the top `k_terms` positively associated terms; when a variable
/// profile and a chi2 threshold are given, the significantly associated
/// modalities appear below the terms, the way illustrative variables
/// annotate a printed dendrogram.
pub fn export_dendrogram_dot(
    tree: &ClassTree,
    profile: &ClassProfile,
    k_terms: usize,
    variables: Option<(&VariableProfile, f64)>,
) -> String {
    let mut top_terms: BTreeMap<u32, Vec<&TermAssociation>> = BTreeMap::new();
    for e in &profile.entries {
        if e.sign > 0 {
            top_terms.entry(e.class).or_default().push(e);
        }
    }
    for terms in top_terms.values_mut() {
        terms.sort_by(|a, b| {
            b.chi2.partial_cmp(&a.chi2).unwrap().then_with(|| a.term.cmp(&b.term))
        });
        terms.truncate(k_terms);
    }

    let mut class_variables: BTreeMap<u32, Vec<String>> = BTreeMap::new();
    if let Some((variable_profile, threshold)) = variables {
        let mut significant: Vec<&VariableAssociation> = variable_profile
            .entries
            .iter()
            .filter(|e| e.sign > 0 && e.chi2 >= threshold)
            .collect();
        significant.sort_by(|a, b| {
            a.class
                .cmp(&b.class)
                .then_with(|| b.chi2.partial_cmp(&a.chi2).unwrap())
                .then_with(|| a.variable.cmp(&b.variable))
                .then_with(|| a.modality.cmp(&b.modality))
        });
        for e in significant {
            let labels = class_variables.entry(e.class).or_default();
            if labels.len() < k_terms {
                labels.push(format!("{}={}", e.variable, e.modality));
            }
        }
    }

    let mut out = String::from("digraph chd {\n  node [shape=box, fontname=\"Helvetica\"];\n");
    let classified = tree.n_classified();
    let total = tree.n_units().max(1);
    out.push_str(&format!(
        "  label=\"{} classes, {classified}/{} units classified ({:.1}%)\";\n",
        tree.n_classes,
        tree.n_units(),
        100.0 * classified as f64 / total as f64
    ));
    for (id, node) in tree.nodes.iter().enumerate() {
        match node {
            TreeNode::Internal { chi2, size, .. } => {
                out.push_str(&format!("  n{id} [label=\"n={size}\\nchi2={chi2:.3}\"];\n"));
            }
            TreeNode::Leaf { units, class } => match class {
                Some(c) => {
                    let label_terms = top_terms
                        .get(c)
                        .map(|terms| {
                            terms.iter().map(|t| t.term.as_str()).collect::<Vec<_>>().join(" ")
                        })
                        .unwrap_or_default();
                    let label_variables = class_variables
                        .get(c)
                        .filter(|v| !v.is_empty())
                        .map(|v| format!("\\n+ {}", v.join(" ")))
                        .unwrap_or_default();
                    out.push_str(&format!(
                        "  n{id} [label=\"class {c}\\nn={}\\n{label_terms}{label_variables}\"];\n",
                        units.len()
                    ));
                }
                None => {
                    out.push_str(&format!(
                        "  n{id} [label=\"unclassified\\nn={}\"];\n",
                        units.len()
                    ));
                }
            },
        }
    }
    for (id, node) in tree.nodes.iter().enumerate() {
        if let TreeNode::Internal { left, right, .. } = node {
            out.push_str(&format!("  n{id} -> n{left};\n"));
            out.push_str(&format!("  n{id} -> n{right};\n"));
        }
    }
    out.push_str("}\n");
    out
}
