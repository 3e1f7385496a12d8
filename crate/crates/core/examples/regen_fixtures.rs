//! Rewrites the cassettes and reference corpus under `data/`.
//!
//!     cargo run -p protoforge-core --features testkit --example regen_fixtures

use protoforge_core::dataset::{export_jsonl, DEFAULT_EPOCHS, FINETUNE_SYSTEM_PROMPT};
use protoforge_core::fixtures::{default_data_dir, regenerate};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let data = default_data_dir();
    let f = regenerate(&data)?;
    for (name, text) in &f.cassettes {
        println!("{name}: {} entries", text.lines().count());
    }
    let out = std::env::temp_dir().join("protoforge-reference.jsonl");
    let report = export_jsonl(&f.corpus, FINETUNE_SYSTEM_PROMPT, &out, DEFAULT_EPOCHS)?;
    println!("{report:?}");
    Ok(())
}
