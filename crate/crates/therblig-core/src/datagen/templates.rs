//! Task templates: therblig grammars plus waypoint bindings.
//!
//! A template fixes the order of therblig phases, a duration range per
//! phase, and which scene-object role each Grasp/Use/Release acts on.
//! Six templates emulate the structure of the training tasks and five
//! more the held-out evaluation tasks; they differ in grammar shape,
//! phase durations, and contact-force signatures, not in physics.

use crate::domain::Therblig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scene-object roles a template can bind to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Source,
    Destination,
    Tool,
}

impl Role {
    /// Class name the role binds to in a scene.
    pub fn class_name(self) -> &'static str {
        match self {
            Role::Source => "source",
            Role::Destination => "destination",
            Role::Tool => "tool",
        }
    }
}

/// Binds transport endpoints and action anchors to scene roles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaypointSpec {
    /// Object grasped (and start of every loaded transport chain).
    pub grasp_role: Role,
    /// Where Use phases happen, when the grammar has any.
    pub use_role: Option<Role>,
    /// Object location the Release happens at.
    pub release_role: Role,
}

/// One grammar phase: a therblig and its duration range in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrammarPhase {
    pub therblig: Therblig,
    pub min_steps: usize,
    pub max_steps: usize,
}

fn phase(therblig: Therblig, min_steps: usize, max_steps: usize) -> GrammarPhase {
    GrammarPhase {
        therblig,
        min_steps,
        max_steps,
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GrammarError {
    #[error("grammar must start and end with Rest")]
    RestBookends,
    #[error("grammar order violated: {0}")]
    Order(String),
    #[error("phase {index} has empty duration range ({min}, {max})")]
    EmptyRange { index: usize, min: usize, max: usize },
}

/// A named task generator blueprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub name: String,
    pub grammar: Vec<GrammarPhase>,
    pub waypoints: WaypointSpec,
    /// Contact-force oscillation amplitude during Use, newtons.
    pub use_amplitude: f64,
    /// Contact-force oscillation frequency during Use, hertz.
    pub use_frequency: f64,
}

impl TaskTemplate {
    pub fn new(
        name: &str,
        grammar: Vec<GrammarPhase>,
        waypoints: WaypointSpec,
        use_amplitude: f64,
        use_frequency: f64,
    ) -> Result<TaskTemplate, GrammarError> {
        let template = TaskTemplate {
            name: name.to_string(),
            grammar,
            waypoints,
            use_amplitude,
            use_frequency,
        };
        template.validate()?;
        Ok(template)
    }

    /// Check the grammar ordering rules.
    pub fn validate(&self) -> Result<(), GrammarError> {
        validate_grammar(&self.grammar.iter().map(|p| p.therblig).collect::<Vec<_>>())?;
        for (index, p) in self.grammar.iter().enumerate() {
            if p.min_steps == 0 || p.max_steps < p.min_steps {
                return Err(GrammarError::EmptyRange {
                    index,
                    min: p.min_steps,
                    max: p.max_steps,
                });
            }
        }
        Ok(())
    }

    /// Sum of minimum / maximum phase durations.
    pub fn duration_bounds(&self) -> (usize, usize) {
        let min = self.grammar.iter().map(|p| p.min_steps).sum();
        let max = self.grammar.iter().map(|p| p.max_steps).sum();
        (min, max)
    }
}

/// Ordering rules every therblig sequence must satisfy: Rest bookends,
/// Grasp before TransportLoaded before Release, Use only while holding.
pub fn validate_grammar(sequence: &[Therblig]) -> Result<(), GrammarError> {
    use Therblig::*;
    if sequence.first() != Some(&Rest) || sequence.last() != Some(&Rest) {
        return Err(GrammarError::RestBookends);
    }
    let position = |t: Therblig| sequence.iter().position(|x| *x == t);
    let grasp = position(Grasp);
    let release = position(Release);
    if let Some(tl) = position(TransportLoaded) {
        match grasp {
            Some(g) if g < tl => {}
            _ => return Err(GrammarError::Order("TransportLoaded before Grasp".into())),
        }
        match release {
            Some(r) if tl < r => {}
            _ => return Err(GrammarError::Order("Release before TransportLoaded".into())),
        }
    }
    for (i, t) in sequence.iter().enumerate() {
        if *t == Use {
            let ok = matches!(grasp, Some(g) if g < i) && matches!(release, Some(r) if i < r);
            if !ok {
                return Err(GrammarError::Order(format!(
                    "Use at position {i} outside Grasp..Release"
                )));
            }
        }
    }
    Ok(())
}

/// The six training-task templates.
pub fn training_templates() -> Vec<TaskTemplate> {
    use Therblig::*;
    let pick_place = TaskTemplate::new(
        "tool_pick_place",
        vec![
            phase(Rest, 45, 90),
            phase(TransportEmpty, 70, 130),
            phase(Grasp, 25, 50),
            phase(TransportLoaded, 80, 150),
            phase(Release, 25, 50),
            phase(TransportEmpty, 60, 120),
            phase(Rest, 45, 90),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: None,
            release_role: Role::Destination,
        },
        0.0,
        0.0,
    );
    let crossbeam_cut = TaskTemplate::new(
        "crossbeam_cut",
        vec![
            phase(Rest, 40, 80),
            phase(TransportEmpty, 55, 100),
            phase(Grasp, 20, 45),
            phase(TransportLoaded, 60, 110),
            phase(Use, 80, 150),
            phase(TransportLoaded, 60, 110),
            phase(Release, 20, 45),
            phase(TransportEmpty, 50, 95),
            phase(Rest, 40, 80),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: Some(Role::Destination),
            release_role: Role::Source,
        },
        4.5,
        0.9,
    );
    let brick_glue = TaskTemplate::new(
        "brick_glue",
        vec![
            phase(Rest, 40, 85),
            phase(TransportEmpty, 60, 110),
            phase(Grasp, 22, 45),
            phase(TransportLoaded, 70, 130),
            phase(Use, 60, 120),
            phase(Delay, 40, 80),
            phase(Release, 22, 45),
            phase(TransportEmpty, 55, 100),
            phase(Rest, 40, 85),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: Some(Role::Destination),
            release_role: Role::Destination,
        },
        2.0,
        1.6,
    );
    let tissue_sweep = TaskTemplate::new(
        "tissue_sweep",
        vec![
            phase(Rest, 40, 80),
            phase(TransportEmpty, 55, 100),
            phase(Grasp, 20, 42),
            phase(TransportLoaded, 55, 105),
            phase(Use, 95, 170),
            phase(TransportLoaded, 55, 105),
            phase(Release, 20, 42),
            phase(TransportEmpty, 50, 90),
            phase(Rest, 40, 80),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: Some(Role::Destination),
            release_role: Role::Source,
        },
        3.0,
        1.3,
    );
    let surface_wipe = TaskTemplate::new(
        "surface_wipe",
        vec![
            phase(Rest, 45, 90),
            phase(TransportEmpty, 60, 110),
            phase(Grasp, 22, 46),
            phase(TransportLoaded, 65, 125),
            phase(Use, 100, 180),
            phase(Release, 22, 46),
            phase(TransportEmpty, 55, 105),
            phase(Rest, 45, 90),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: Some(Role::Destination),
            release_role: Role::Destination,
        },
        3.5,
        2.1,
    );
    let cup_pour = TaskTemplate::new(
        "cup_pour",
        vec![
            phase(Rest, 40, 80),
            phase(TransportEmpty, 55, 100),
            phase(Grasp, 22, 45),
            phase(TransportLoaded, 60, 115),
            phase(Delay, 30, 65),
            phase(Use, 60, 120),
            phase(TransportLoaded, 60, 115),
            phase(Release, 22, 45),
            phase(TransportEmpty, 50, 95),
            phase(Rest, 40, 80),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: Some(Role::Destination),
            release_role: Role::Source,
        },
        1.5,
        0.6,
    );
    vec![
        pick_place.unwrap(),
        crossbeam_cut.unwrap(),
        brick_glue.unwrap(),
        tissue_sweep.unwrap(),
        surface_wipe.unwrap(),
        cup_pour.unwrap(),
    ]
}

/// The five held-out evaluation templates used for transfer trials.
pub fn evaluation_templates() -> Vec<TaskTemplate> {
    use Therblig::*;
    let board_roll = TaskTemplate::new(
        "board_roll",
        vec![
            phase(Rest, 40, 85),
            phase(TransportEmpty, 55, 105),
            phase(Grasp, 22, 45),
            phase(TransportLoaded, 60, 115),
            phase(Use, 85, 160),
            phase(TransportLoaded, 60, 115),
            phase(Release, 22, 45),
            phase(TransportEmpty, 50, 95),
            phase(Rest, 40, 85),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: Some(Role::Destination),
            release_role: Role::Source,
        },
        2.8,
        1.0,
    );
    let foam_flip = TaskTemplate::new(
        "foam_flip",
        vec![
            phase(Rest, 45, 90),
            phase(TransportEmpty, 65, 120),
            phase(Grasp, 25, 50),
            phase(Delay, 30, 65),
            phase(TransportLoaded, 75, 140),
            phase(Release, 25, 50),
            phase(TransportEmpty, 60, 110),
            phase(Rest, 45, 90),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: None,
            release_role: Role::Destination,
        },
        0.0,
        0.0,
    );
    let plate_scrub = TaskTemplate::new(
        "plate_scrub",
        vec![
            phase(Rest, 40, 80),
            phase(TransportEmpty, 55, 100),
            phase(Grasp, 20, 42),
            phase(TransportLoaded, 60, 110),
            phase(Use, 100, 180),
            phase(Release, 20, 42),
            phase(TransportEmpty, 50, 95),
            phase(Rest, 40, 80),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: Some(Role::Destination),
            release_role: Role::Destination,
        },
        4.0,
        2.4,
    );
    let spoon_tilt = TaskTemplate::new(
        "spoon_tilt",
        vec![
            phase(Rest, 40, 80),
            phase(TransportEmpty, 50, 95),
            phase(Grasp, 20, 42),
            phase(TransportLoaded, 55, 105),
            phase(Use, 45, 90),
            phase(Delay, 30, 60),
            phase(Use, 45, 90),
            phase(TransportLoaded, 55, 105),
            phase(Release, 20, 42),
            phase(TransportEmpty, 45, 90),
            phase(Rest, 40, 80),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: Some(Role::Destination),
            release_role: Role::Source,
        },
        1.2,
        0.7,
    );
    let paper_stamp = TaskTemplate::new(
        "paper_stamp",
        vec![
            phase(Rest, 45, 90),
            phase(TransportEmpty, 60, 110),
            phase(Grasp, 22, 46),
            phase(TransportLoaded, 65, 125),
            phase(Use, 40, 85),
            phase(TransportLoaded, 65, 125),
            phase(Release, 22, 46),
            phase(TransportEmpty, 55, 100),
            phase(Rest, 45, 90),
        ],
        WaypointSpec {
            grasp_role: Role::Source,
            use_role: Some(Role::Destination),
            release_role: Role::Source,
        },
        5.0,
        0.5,
    );
    vec![
        board_roll.unwrap(),
        foam_flip.unwrap(),
        plate_scrub.unwrap(),
        spoon_tilt.unwrap(),
        paper_stamp.unwrap(),
    ]
}

/// Template lookup across both sets.
pub fn template_by_name(name: &str) -> Option<TaskTemplate> {
    training_templates()
        .into_iter()
        .chain(evaluation_templates())
        .find(|t| t.name == name)
}
