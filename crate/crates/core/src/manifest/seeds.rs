//! Built-in manifest corpus: the analysis applications the platform ships
//! with, one manifest per variant.

use super::{validate_manifest, ApplicationManifest, ManifestError};

macro_rules! seed {
    ($file:literal) => {
        ($file, include_str!(concat!("../../seeds/", $file)))
    };
}

const SEEDS: [(&str, &str); 17] = [
    seed!("netanova-preprocessing.json"),
    seed!("netanova.json"),
    seed!("netmug.json"),
    seed!("gmic.json"),
    seed!("pca-2d.json"),
    seed!("pca-3d.json"),
    seed!("pca-loadings.json"),
    seed!("tsne-2d.json"),
    seed!("umap-2d.json"),
    seed!("scatter-matrix.json"),
    seed!("scatter-marginals.json"),
    seed!("roc-binary.json"),
    seed!("roc-multiclass.json"),
    seed!("pr-binary.json"),
    seed!("pr-multiclass.json"),
    seed!("lr-preliminary-plots.json"),
    seed!("demo.json"),
];

/// Raw `(file name, JSON text)` pairs.
pub fn seed_documents() -> &'static [(&'static str, &'static str)] {
    &SEEDS
}

pub fn seed_manifests() -> Result<Vec<ApplicationManifest>, ManifestError> {
    SEEDS
        .iter()
        .map(|(_, text)| validate_manifest(text))
        .collect()
}
