//! Keyframe and animation prompts built from the same shot design.

use reelwright::schema::{AssetKind, AssetRef, CharacterDef, Shot, ShotDesign};
use reelwright::stages::{build_animation_prompt, build_keyframe_prompt};

fn main() {
    let mara = CharacterDef {
        id: "mara".into(),
        name: "Mara".into(),
        appearance: "grey coat".into(),
        lora_ref: Some("adapter-mara".into()),
    };
    let shot = Shot::new(1, "gallery", "Mara scans the horizon").with_characters(["mara"]);
    let design = ShotDesign {
        shot_index: 1,
        background: "iron gallery rail, storm clouds".into(),
        character_pose: "leaning on the rail".into(),
        character_action: "raises a spyglass".into(),
        prop_description: "brass spyglass".into(),
        camera_position: "low angle behind her shoulder".into(),
        camera_movement: "slow push in".into(),
        lighting_design: "cold rim light from the lamp".into(),
    };

    let t2i = build_keyframe_prompt(&shot, &design, std::slice::from_ref(&mara)).unwrap();
    println!("-- keyframe --\n{}\n", t2i.body);
    let keyframe = AssetRef::new("kf-1", AssetKind::Image);
    let i2v = build_animation_prompt(&shot, &design, &[mara], Some(&keyframe)).unwrap();
    println!("-- animation --\n{}", i2v.body);

    let mut partial = design.clone();
    partial.camera_movement.clear();
    println!("\n{}", build_keyframe_prompt(&shot, &partial, &[]).map(|_| "keyframe still builds").unwrap());
    println!("{}", build_animation_prompt(&shot, &partial, &[], Some(&keyframe)).unwrap_err());
}
