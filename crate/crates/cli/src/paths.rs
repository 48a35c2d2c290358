use std::path::{Component, Path, PathBuf};

fn normalize(p: &Path) -> PathBuf {
    let abs = std::path::absolute(p).unwrap_or_else(|_| p.to_path_buf());
    let mut out = PathBuf::new();
    for c in abs.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                out.pop();
            }
            other => out.push(other.as_os_str()),
        }
    }
    out
}

fn dir_of(manifest: &Path) -> PathBuf {
    normalize(manifest.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new(".")))
}

/// Re-expresses `rel` (relative to `from` manifest) relative to the `to` manifest.
pub fn rebase(rel: &str, from: &Path, to: &Path) -> String {
    let (src, dst) = (dir_of(from), dir_of(to));
    if src == dst || Path::new(rel).is_absolute() {
        return rel.to_string();
    }
    let target = normalize(&src.join(rel));
    let t: Vec<Component> = target.components().collect();
    let d: Vec<Component> = dst.components().collect();
    let common = t.iter().zip(&d).take_while(|(a, b)| a == b).count();
    let mut parts: Vec<String> = vec!["..".into(); d.len() - common];
    parts.extend(t[common..].iter().map(|c| c.as_os_str().to_string_lossy().into_owned()));
    parts.join("/")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rebasing() {
        assert_eq!(rebase("depth/1.cvd", Path::new("a/m.json"), Path::new("a/n.json")), "depth/1.cvd");
        assert_eq!(rebase("depth/1.cvd", Path::new("a/m.json"), Path::new("a/out/n.json")), "../depth/1.cvd");
        assert_eq!(rebase("../x/mesh.json", Path::new("a/b/m.json"), Path::new("a/n.json")), "x/mesh.json");
    }
}
