use std::io::{Read, Write};

use super::{DecisionTree, ForestError, ForestModel, Node};

const MAGIC: &[u8; 8] = b"COTAFRST";
const VERSION: u8 = 1;

impl ForestModel {
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[VERSION])?;
        w.write_all(&(self.n_classes as u32).to_le_bytes())?;
        w.write_all(&(self.feature_count as u32).to_le_bytes())?;
        w.write_all(&(self.trees.len() as u32).to_le_bytes())?;
        for t in &self.trees {
            w.write_all(&(t.nodes.len() as u32).to_le_bytes())?;
            for node in &t.nodes {
                match node {
                    Node::Split { feature, threshold, left, right, weighted_decrease } => {
                        w.write_all(&[0])?;
                        w.write_all(&(*feature as u32).to_le_bytes())?;
                        w.write_all(&threshold.to_le_bytes())?;
                        w.write_all(&(*left as u32).to_le_bytes())?;
                        w.write_all(&(*right as u32).to_le_bytes())?;
                        w.write_all(&weighted_decrease.to_le_bytes())?;
                    }
                    Node::Leaf { probs } => {
                        w.write_all(&[1])?;
                        for p in probs {
                            w.write_all(&p.to_le_bytes())?;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self, ForestError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(ForestError::Format("not a forest model file".into()));
        }
        let version = read_u8(&mut r)?;
        if version != VERSION {
            return Err(ForestError::Format(format!("unsupported forest model version {version}")));
        }
        let n_classes = read_u32(&mut r)? as usize;
        let feature_count = read_u32(&mut r)? as usize;
        let n_trees = read_u32(&mut r)? as usize;
        let mut trees = Vec::with_capacity(n_trees.min(1 << 16));
        for _ in 0..n_trees {
            let n_nodes = read_u32(&mut r)? as usize;
            let mut nodes = Vec::with_capacity(n_nodes.min(1 << 20));
            for _ in 0..n_nodes {
                let node = match read_u8(&mut r)? {
                    0 => {
                        let feature = read_u32(&mut r)? as usize;
                        let threshold = read_f64(&mut r)?;
                        let left = read_u32(&mut r)? as usize;
                        let right = read_u32(&mut r)? as usize;
                        let weighted_decrease = read_f64(&mut r)?;
                        if feature >= feature_count || left >= n_nodes || right >= n_nodes {
                            return Err(ForestError::Format("split node index out of range".into()));
                        }
                        Node::Split { feature, threshold, left, right, weighted_decrease }
                    }
                    1 => Node::Leaf { probs: (0..n_classes).map(|_| read_f64(&mut r)).collect::<Result<_, _>>()? },
                    tag => return Err(ForestError::Format(format!("unknown node tag {tag}"))),
                };
                nodes.push(node);
            }
            if nodes.is_empty() {
                return Err(ForestError::Format("empty tree".into()));
            }
            trees.push(DecisionTree { nodes });
        }
        if trees.is_empty() {
            return Err(ForestError::Format("forest has no trees".into()));
        }
        Ok(Self { trees, n_classes, feature_count })
    }
}

fn read_u8<R: Read>(r: &mut R) -> std::io::Result<u8> {
    let mut b = [0u8; 1];
    r.read_exact(&mut b)?;
    Ok(b[0])
}

fn read_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::super::{fit_forest, ForestConfig};
    use super::*;

    #[test]
    fn round_trip() {
        let x: Vec<Vec<f64>> = (0..60).map(|i| vec![(i % 7) as f64, (i / 3) as f64]).collect();
        let y: Vec<usize> = (0..60).map(|i| (i % 7 > 3) as usize + (i > 40) as usize).collect();
        let cfg = ForestConfig { n_estimators: 4, min_samples_leaf: 2, seed: 1, ..Default::default() };
        let m = fit_forest(&x, &y, 3, &cfg).unwrap();
        let mut buf = Vec::new();
        m.write_binary(&mut buf).unwrap();
        let back = ForestModel::read_binary(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert!(ForestModel::read_binary(&buf[..buf.len() - 3]).is_err());
        buf[8] = 9;
        assert!(matches!(ForestModel::read_binary(&buf[..]), Err(ForestError::Format(_))));
    }
}
