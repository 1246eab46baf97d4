use super::{BranchRef, Instance};

/// Disjoint-set forest with path halving and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        Self { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

/// Connected-component label per bus; labels are `0..count` in order of
/// first appearance by bus index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentLabeling {
    pub labels: Vec<usize>,
    pub count: usize,
}

impl ComponentLabeling {
    pub fn is_connected(&self) -> bool {
        self.count <= 1
    }
}

/// Labels components over DC branches plus closed AC branches, minus the
/// optional outaged branch.
pub fn build_topology(inst: &Instance, ac_closed: &[bool], outage: Option<BranchRef>) -> ComponentLabeling {
    let idx = inst.index();
    let n = inst.num_buses();
    let mut uf = UnionFind::new(n);
    for (j, &closed) in ac_closed.iter().enumerate() {
        if closed && outage != Some(BranchRef::Ac(j)) {
            uf.union(idx.ac_fr[j], idx.ac_to[j]);
        }
    }
    for j in 0..inst.dc_branches.len() {
        if outage != Some(BranchRef::Dc(j)) {
            uf.union(idx.dc_fr[j], idx.dc_to[j]);
        }
    }
    let mut root_label = vec![usize::MAX; n];
    let mut labels = vec![0; n];
    let mut count = 0;
    for (i, label) in labels.iter_mut().enumerate() {
        let r = uf.find(i);
        if root_label[r] == usize::MAX {
            root_label[r] = count;
            count += 1;
        }
        *label = root_label[r];
    }
    ComponentLabeling { labels, count }
}
