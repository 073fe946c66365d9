use std::path::PathBuf;

use vctx_core::functions::Registry;

/// Regenerate with `UPDATE_GOLDEN=1 cargo test -p vctx-core --test registry_golden`
/// and review the diff.
#[test]
fn default_registry_render_is_stable() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/default_registry.txt");
    let rendered = Registry::default_set().render();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &rendered).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden file present");
    assert_eq!(rendered, golden);
}
