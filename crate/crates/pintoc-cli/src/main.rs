//! Command-line entry point; filled in once the driver layer lands.

fn main() -> anyhow::Result<()> {
    Ok(())
}
