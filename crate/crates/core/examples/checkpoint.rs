//! Checkpoint format: save, reload, re-save byte for byte, and the errors for
//! damaged files.

mod common;

use monox::model::{from_bytes, load_checkpoint_as, save_checkpoint, to_bytes, CheckpointError, Role, MAGIC};
use monox::pipelines::Params;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let setup = common::quick_setup();
    let student = setup.student_init(7)?;
    let dir = std::env::temp_dir().join(format!("monox-checkpoint-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("student.ckpt");

    save_checkpoint(&student, &path)?;
    let loaded: Params = load_checkpoint_as(&path, Role::Student)?;
    let first = std::fs::read(&path)?;
    let second = to_bytes(&loaded);
    println!("{} bytes, {} parameters", first.len(), loaded.num_parameters());
    println!("re-save identical: {}", first == second);
    println!("checksum {} -> {}", student.checksum(), loaded.checksum());
    println!("frozen offsets {:?}", loaded.offsets_checksum());

    match load_checkpoint_as::<f32>(&path, Role::Teacher) {
        Err(e @ CheckpointError::RoleMismatch { .. }) => println!("as teacher: {e}"),
        other => println!("unexpected: {:?}", other.map(|_| ())),
    }
    let mut bad = first.clone();
    bad[..MAGIC.len()].copy_from_slice(b"XXXXXX");
    println!("bad magic: {}", from_bytes::<f32>(&bad).unwrap_err());
    println!("truncated: {}", from_bytes::<f32>(&first[..first.len() / 2]).unwrap_err());

    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
