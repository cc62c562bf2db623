//! Keyframe (T2I) and animation (I2V) prompt templates.
//!
//! Both share Character, Background, Prop Description and Lighting Design.
//! Only the keyframe prompt carries Character Pose and Camera Position, and
//! only the animation prompt carries Character Action and Camera Movement.

use thiserror::Error;

use crate::schema::{
    AssetKind, AssetRef, CharacterDef, DesignElement, PromptKind, PromptSpec, Shot, ShotDesign,
};

pub const KEYFRAME_ELEMENTS: [DesignElement; 5] = [
    DesignElement::Background,
    DesignElement::CharacterPose,
    DesignElement::PropDescription,
    DesignElement::CameraPosition,
    DesignElement::LightingDesign,
];

pub const ANIMATION_ELEMENTS: [DesignElement; 5] = [
    DesignElement::Background,
    DesignElement::CharacterAction,
    DesignElement::PropDescription,
    DesignElement::CameraMovement,
    DesignElement::LightingDesign,
];

/// Placeholder rendered for an element left empty in a lenient build.
pub const UNSPECIFIED: &str = "unspecified";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PromptError {
    #[error("shot {shot}: design is missing {}", missing.iter().map(|e| e.as_str()).collect::<Vec<_>>().join(", "))]
    IncompleteDesign { shot: u32, missing: Vec<DesignElement> },
    #[error("shot {shot}: design belongs to shot {design}")]
    DesignMismatch { shot: u32, design: u32 },
    #[error("shot {shot}: no keyframe image to animate")]
    MissingKeyframe { shot: u32 },
}

fn character_slot(shot: &Shot, chars: &[CharacterDef]) -> String {
    let present: Vec<String> = shot
        .character_ids
        .iter()
        .filter_map(|id| chars.iter().find(|c| &c.id == id))
        .map(|c| format!("{} ({})", c.name, c.appearance))
        .collect();
    if present.is_empty() {
        "None".into()
    } else {
        present.join("; ")
    }
}

fn adapter_refs(shot: &Shot, chars: &[CharacterDef]) -> Option<String> {
    let refs: Vec<&str> = shot
        .character_ids
        .iter()
        .filter_map(|id| chars.iter().find(|c| &c.id == id))
        .filter_map(|c| c.lora_ref.as_deref())
        .collect();
    (!refs.is_empty()).then(|| refs.join(","))
}

fn render(
    kind: PromptKind,
    shot: &Shot,
    design: &ShotDesign,
    chars: &[CharacterDef],
    elements: &[DesignElement],
    lenient: bool,
) -> Result<PromptSpec, PromptError> {
    if design.shot_index != shot.index {
        return Err(PromptError::DesignMismatch { shot: shot.index, design: design.shot_index });
    }
    let missing: Vec<DesignElement> =
        elements.iter().copied().filter(|e| design.element(*e).trim().is_empty()).collect();
    if !missing.is_empty() && !lenient {
        return Err(PromptError::IncompleteDesign { shot: shot.index, missing });
    }
    let mut body = format!("Character: {}", character_slot(shot, chars));
    for e in elements {
        let text = design.element(*e).trim();
        body.push_str(&format!("\n{}: {}", e.label(), if text.is_empty() { UNSPECIFIED } else { text }));
    }
    let mut p = PromptSpec::new(kind, body).with_meta("shot", shot.index.to_string());
    if let Some(refs) = adapter_refs(shot, chars) {
        p = p.with_meta("adapters", refs);
    }
    Ok(p)
}

/// T2I prompt for a shot's keyframe. `chars` should carry `lora_ref` for
/// characters with a trained adapter.
pub fn build_keyframe_prompt(
    shot: &Shot,
    design: &ShotDesign,
    chars: &[CharacterDef],
) -> Result<PromptSpec, PromptError> {
    render(PromptKind::T2i, shot, design, chars, &KEYFRAME_ELEMENTS, false)
}

/// As [`build_keyframe_prompt`], rendering empty elements as `unspecified`.
pub fn build_keyframe_prompt_lenient(shot: &Shot, design: &ShotDesign, chars: &[CharacterDef]) -> PromptSpec {
    render(PromptKind::T2i, shot, design, chars, &KEYFRAME_ELEMENTS, true).unwrap_or_else(|_| {
        PromptSpec::new(PromptKind::T2i, format!("Character: {}", character_slot(shot, chars)))
    })
}

/// I2V prompt animating `keyframe`.
pub fn build_animation_prompt(
    shot: &Shot,
    design: &ShotDesign,
    chars: &[CharacterDef],
    keyframe: Option<&AssetRef>,
) -> Result<PromptSpec, PromptError> {
    build_animation(shot, design, chars, keyframe, false)
}

pub fn build_animation_prompt_lenient(
    shot: &Shot,
    design: &ShotDesign,
    chars: &[CharacterDef],
    keyframe: Option<&AssetRef>,
) -> Result<PromptSpec, PromptError> {
    build_animation(shot, design, chars, keyframe, true)
}

fn build_animation(
    shot: &Shot,
    design: &ShotDesign,
    chars: &[CharacterDef],
    keyframe: Option<&AssetRef>,
    lenient: bool,
) -> Result<PromptSpec, PromptError> {
    let keyframe = keyframe
        .filter(|k| k.kind == AssetKind::Image)
        .ok_or(PromptError::MissingKeyframe { shot: shot.index })?;
    Ok(render(PromptKind::I2v, shot, design, chars, &ANIMATION_ELEMENTS, lenient)?
        .with_attachment(keyframe.clone()))
}
