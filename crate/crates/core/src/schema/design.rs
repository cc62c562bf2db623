use std::fmt;

use serde::{Deserialize, Serialize};

/// The seven per-shot visual-control elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignElement {
    Background,
    CharacterPose,
    CharacterAction,
    PropDescription,
    CameraPosition,
    CameraMovement,
    LightingDesign,
}

impl DesignElement {
    pub const ALL: [DesignElement; 7] = [
        DesignElement::Background,
        DesignElement::CharacterPose,
        DesignElement::CharacterAction,
        DesignElement::PropDescription,
        DesignElement::CameraPosition,
        DesignElement::CameraMovement,
        DesignElement::LightingDesign,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DesignElement::Background => "background",
            DesignElement::CharacterPose => "character_pose",
            DesignElement::CharacterAction => "character_action",
            DesignElement::PropDescription => "prop_description",
            DesignElement::CameraPosition => "camera_position",
            DesignElement::CameraMovement => "camera_movement",
            DesignElement::LightingDesign => "lighting_design",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            DesignElement::Background => "Background",
            DesignElement::CharacterPose => "Character Pose",
            DesignElement::CharacterAction => "Character Action",
            DesignElement::PropDescription => "Prop Description",
            DesignElement::CameraPosition => "Camera Position",
            DesignElement::CameraMovement => "Camera Movement",
            DesignElement::LightingDesign => "Lighting Design",
        }
    }

    pub fn parse(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.as_str() == token)
    }
}

impl fmt::Display for DesignElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotDesign {
    pub shot_index: u32,
    pub background: String,
    pub character_pose: String,
    pub character_action: String,
    pub prop_description: String,
    pub camera_position: String,
    pub camera_movement: String,
    pub lighting_design: String,
}

impl ShotDesign {
    pub fn element(&self, e: DesignElement) -> &str {
        match e {
            DesignElement::Background => &self.background,
            DesignElement::CharacterPose => &self.character_pose,
            DesignElement::CharacterAction => &self.character_action,
            DesignElement::PropDescription => &self.prop_description,
            DesignElement::CameraPosition => &self.camera_position,
            DesignElement::CameraMovement => &self.camera_movement,
            DesignElement::LightingDesign => &self.lighting_design,
        }
    }

    pub fn element_mut(&mut self, e: DesignElement) -> &mut String {
        match e {
            DesignElement::Background => &mut self.background,
            DesignElement::CharacterPose => &mut self.character_pose,
            DesignElement::CharacterAction => &mut self.character_action,
            DesignElement::PropDescription => &mut self.prop_description,
            DesignElement::CameraPosition => &mut self.camera_position,
            DesignElement::CameraMovement => &mut self.camera_movement,
            DesignElement::LightingDesign => &mut self.lighting_design,
        }
    }

    pub fn missing_elements(&self) -> Vec<DesignElement> {
        DesignElement::ALL.into_iter().filter(|e| self.element(*e).trim().is_empty()).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_elements().is_empty()
    }
}
