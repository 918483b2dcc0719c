/// Per-vertex one-ring fans ordered counter-clockwise by face winding.
///
/// For a vertex `v`, a face `(v, a, b)` in winding order makes `b` the
/// counter-clockwise successor of `a` around `v`. Interior vertices get a
/// closed cycle; boundary vertices get an open fan listed from its first
/// edge. Non-manifold vertices get their fans concatenated.
#[derive(Clone, Debug)]
pub struct Adjacency {
    fans: Vec<Vec<usize>>,
    boundary: Vec<bool>,
}

impl Adjacency {
    pub fn new(vertex_count: usize, faces: &[[usize; 3]]) -> Self {
        let mut succ: Vec<Vec<(usize, usize)>> = vec![Vec::new(); vertex_count];
        for &[a, b, c] in faces {
            for (v, from, to) in [(a, b, c), (b, c, a), (c, a, b)] {
                if !succ[v].iter().any(|&(f, _)| f == from) {
                    succ[v].push((from, to));
                }
            }
        }
        let mut fans = Vec::with_capacity(vertex_count);
        let mut boundary = vec![false; vertex_count];
        for (v, edges) in succ.iter().enumerate() {
            let mut nbrs: Vec<usize> = edges.iter().flat_map(|&(f, t)| [f, t]).collect();
            nbrs.sort_unstable();
            nbrs.dedup();
            let has_pred = |u: usize| edges.iter().any(|&(_, t)| t == u);
            let next = |u: usize| edges.iter().find(|&&(f, _)| f == u).map(|&(_, t)| t);
            boundary[v] = nbrs.iter().any(|&u| !has_pred(u) || next(u).is_none());
            let mut fan = Vec::with_capacity(nbrs.len());
            let mut visited = vec![false; nbrs.len()];
            let slot = |u: usize| nbrs.binary_search(&u).unwrap();
            while fan.len() < nbrs.len() {
                let start = nbrs
                    .iter()
                    .copied()
                    .filter(|&u| !visited[slot(u)])
                    .find(|&u| !has_pred(u))
                    .or_else(|| nbrs.iter().copied().find(|&u| !visited[slot(u)]))
                    .unwrap();
                let mut cur = start;
                loop {
                    visited[slot(cur)] = true;
                    fan.push(cur);
                    match next(cur) {
                        Some(n) if !visited[slot(n)] => cur = n,
                        _ => break,
                    }
                }
            }
            fans.push(fan);
        }
        Adjacency { fans, boundary }
    }

    pub fn vertex_count(&self) -> usize {
        self.fans.len()
    }

    /// Neighbours of `v` in counter-clockwise fan order.
    pub fn fan(&self, v: usize) -> &[usize] {
        &self.fans[v]
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary[v]
    }
}
