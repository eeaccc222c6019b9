//! Disjoint-set forest with path halving and union by size.

#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect(), size: vec![1; n] }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Merges the sets of `a` and `b`; false if they were already joined.
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

    pub fn same(&mut self, a: usize, b: usize) -> bool {
        self.find(a) == self.find(b)
    }
}

/// Union-find keyed by arbitrary `u64` labels (fragment IDs).
#[derive(Debug, Clone, Default)]
pub struct LabelUnionFind {
    index: std::collections::HashMap<u64, usize>,
    inner: Vec<usize>,
    size: Vec<usize>,
}

impl LabelUnionFind {
    fn slot(&mut self, label: u64) -> usize {
        if let Some(&i) = self.index.get(&label) {
            return i;
        }
        let i = self.inner.len();
        self.index.insert(label, i);
        self.inner.push(i);
        self.size.push(1);
        i
    }

    fn root(&mut self, mut x: usize) -> usize {
        while self.inner[x] != x {
            self.inner[x] = self.inner[self.inner[x]];
            x = self.inner[x];
        }
        x
    }

    pub fn same(&mut self, a: u64, b: u64) -> bool {
        let (a, b) = (self.slot(a), self.slot(b));
        self.root(a) == self.root(b)
    }

    pub fn union(&mut self, a: u64, b: u64) -> bool {
        let (a, b) = (self.slot(a), self.slot(b));
        let (mut ra, mut rb) = (self.root(a), self.root(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.inner[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}
