//! Renders the default scene from the camera rig and bakes the views into a
//! texture atlas.
//!
//!     cargo run --release --example bake_texture -- texture.png

use fieldscan::pipeline::{bake_scene, camera_rig, PipelineConfig};
use fieldscan::raycast::MeshBvh;
use fieldscan::sim::synthesize_scene;
use fieldscan::texture::write_png;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).unwrap_or_else(|| "texture.png".into());
    let mut cfg = PipelineConfig::default();
    cfg.texture.resolution = 512;
    let scene = synthesize_scene(&cfg.scene)?;
    let views = camera_rig(&cfg, &scene, &MeshBvh::build(&scene.mesh));
    let map = bake_scene(&cfg, &scene.mesh, &views)?;
    let seen = map.counts.iter().filter(|c| **c > 0).count();
    let covered = map.covered.iter().filter(|c| **c).count();
    let most = map.counts.iter().max().copied().unwrap_or(0);
    println!("{} views; {seen} of {covered} covered texels seen, up to {most} views per texel", views.len());
    write_png(&path, &map.to_rgb8())?;
    println!("wrote {path}");
    Ok(())
}
