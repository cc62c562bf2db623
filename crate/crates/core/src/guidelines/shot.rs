use super::{Finding, RuleId};
use crate::schema::ShotDesign;

/// One SHOT-1 finding per empty element, in element order.
pub fn check_shot_design(design: &ShotDesign) -> Vec<Finding> {
    design
        .missing_elements()
        .into_iter()
        .map(|e| Finding::at(RuleId::Shot1, design.shot_index, format!("{} is missing", e.as_str())))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::DesignElement;

    fn full() -> ShotDesign {
        let mut d = ShotDesign { shot_index: 3, ..Default::default() };
        for e in DesignElement::ALL {
            *d.element_mut(e) = format!("{e} text");
        }
        d
    }

    #[test]
    fn complete_design_is_clean() {
        assert!(check_shot_design(&full()).is_empty());
    }

    #[test]
    fn each_empty_element_is_one_finding() {
        let mut d = full();
        d.camera_movement.clear();
        let f = check_shot_design(&d);
        assert_eq!(f.len(), 1);
        assert_eq!(f[0].to_string(), "SHOT-1 shot=3 camera_movement is missing");

        let empty = ShotDesign { shot_index: 1, ..Default::default() };
        assert_eq!(check_shot_design(&empty).len(), 7);
    }
}
