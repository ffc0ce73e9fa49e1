use clickmat_nn::Module;
use sha2::{Digest, Sha256};

/// SHA-256 over names, shapes and values of every tensor whose name passes `filter`.
pub fn parameter_hash(module: &dyn Module, filter: &dyn Fn(&str) -> bool) -> String {
    let mut hasher = Sha256::new();
    module.visit("", &mut |name, p| {
        if filter(name) {
            hasher.update(name.as_bytes());
            for d in &p.shape {
                hasher.update((*d as u64).to_le_bytes());
            }
            for v in &p.value {
                hasher.update(v.to_le_bytes());
            }
        }
    });
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
