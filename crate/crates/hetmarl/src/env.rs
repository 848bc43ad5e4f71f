//! Desk-scale two-team skirmish on a grid.
//!
//! Two ally agent classes (a fast ranged unit and a tough melee unit) fight a
//! scripted enemy team of the same composition. Everything is deterministic
//! given the reset seed: the scripted opponent, move resolution, and attack
//! resolution all tie-break by unit id.
//!
//! One step resolves in two phases: every unit's decision is fixed against
//! the pre-step state, then all moves apply in unit-id order, then all
//! attacks land in unit-id order (a unit killed this step still deals its
//! decided damage; simultaneity is the point). Distances are Euclidean over
//! cell coordinates.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::graph::{
    build_relations, ClassSpec, ClassTable, GraphArc, NodeClassId, RelationMap, StateGraph,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Team {
    Ally,
    Enemy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnitKind {
    Ranged,
    Melee,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnitSpec {
    pub max_hp: f64,
    /// Cells moved per move action.
    pub move_speed: usize,
    pub attack_range: f64,
    pub attack_damage: f64,
    /// Minimum steps between consecutive attacks; 1 means every step.
    pub cooldown: u32,
}

impl UnitSpec {
    fn validate(&self, name: &str) -> Result<()> {
        let ok = self.max_hp > 0.0
            && self.move_speed > 0
            && self.attack_range > 0.0
            && self.attack_damage > 0.0
            && self.cooldown > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "unit spec {name}: every field must be positive"
            )))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvConfig {
    pub width: usize,
    pub height: usize,
    pub step_limit: u32,
    pub ranged: UnitSpec,
    pub melee: UnitSpec,
    pub allies_ranged: usize,
    pub allies_melee: usize,
    pub enemies_ranged: usize,
    pub enemies_melee: usize,
    /// Arc j -> agent exists iff dist(j, agent) <= obs_radius.
    pub obs_radius: f64,
    /// Full agent communication: arcs between every ordered pair of live
    /// ally agents regardless of distance.
    pub fac: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            width: 16,
            height: 16,
            step_limit: 100,
            ranged: UnitSpec {
                max_hp: 80.0,
                move_speed: 2,
                attack_range: 5.0,
                attack_damage: 10.0,
                cooldown: 2,
            },
            melee: UnitSpec {
                max_hp: 150.0,
                move_speed: 1,
                attack_range: 1.0,
                attack_damage: 8.0,
                cooldown: 1,
            },
            allies_ranged: 2,
            allies_melee: 3,
            enemies_ranged: 2,
            enemies_melee: 3,
            obs_radius: 6.0,
            fac: false,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.ranged.validate("ranged")?;
        self.melee.validate("melee")?;
        if self.allies_ranged + self.allies_melee < 1 {
            return Err(Error::Config("ally team must have at least one unit".into()));
        }
        if self.enemies_ranged + self.enemies_melee < 1 {
            return Err(Error::Config(
                "enemy team must have at least one unit".into(),
            ));
        }
        if self.width < 4 || self.height < 2 {
            return Err(Error::Config(format!(
                "grid {}x{} is too small for two spawn zones",
                self.width, self.height
            )));
        }
        let cells = self.width * self.height;
        if self.unit_count() > cells / 2 {
            return Err(Error::Config(format!(
                "{} units cannot spawn comfortably on {} cells",
                self.unit_count(),
                cells
            )));
        }
        if self.obs_radius < 0.0 {
            return Err(Error::Config("obs_radius must be non-negative".into()));
        }
        Ok(())
    }

    pub fn ally_count(&self) -> usize {
        self.allies_ranged + self.allies_melee
    }

    pub fn enemy_count(&self) -> usize {
        self.enemies_ranged + self.enemies_melee
    }

    pub fn unit_count(&self) -> usize {
        self.ally_count() + self.enemy_count()
    }

    /// 4 moves + one attack per enemy unit + no-op.
    pub fn action_count(&self) -> usize {
        4 + self.enemy_count() + 1
    }

    pub fn noop_action(&self) -> usize {
        self.action_count() - 1
    }

    /// Denominator of the damage reward: total max hp of the enemy team.
    pub fn enemy_total_max_hp(&self) -> f64 {
        self.enemies_ranged as f64 * self.ranged.max_hp
            + self.enemies_melee as f64 * self.melee.max_hp
    }

    /// Classes 0/1 are the ally agent classes, 2/3 the enemy entity classes.
    pub fn class_table(&self) -> Result<ClassTable> {
        let actions = self.action_count();
        ClassTable::new(vec![
            ClassSpec {
                name: "ally_ranged".into(),
                feature_width: 5,
                is_agent: true,
                action_count: actions,
            },
            ClassSpec {
                name: "ally_melee".into(),
                feature_width: 4,
                is_agent: true,
                action_count: actions,
            },
            ClassSpec {
                name: "enemy_ranged".into(),
                feature_width: 5,
                is_agent: false,
                action_count: 0,
            },
            ClassSpec {
                name: "enemy_melee".into(),
                feature_width: 4,
                is_agent: false,
                action_count: 0,
            },
        ])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Unit {
    pub team: Team,
    pub kind: UnitKind,
    pub x: usize,
    pub y: usize,
    pub hp: f64,
    pub cooldown: u32,
}

impl Unit {
    pub fn alive(&self) -> bool {
        self.hp > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BattleState {
    pub units: Vec<Unit>,
    pub step: u32,
    pub done: bool,
    pub victory: bool,
}

/// Valid-action flags for one agent; length 4 + m + 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActionMask {
    valid: Vec<bool>,
}

impl ActionMask {
    pub fn new(valid: Vec<bool>) -> Self {
        assert!(
            valid.iter().any(|&v| v),
            "action mask with no valid action violates the environment contract"
        );
        ActionMask { valid }
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn is_valid(&self, action: usize) -> bool {
        self.valid.get(action).copied().unwrap_or(false)
    }

    pub fn valid_actions(&self) -> Vec<usize> {
        (0..self.valid.len()).filter(|&a| self.valid[a]).collect()
    }

    pub fn flags(&self) -> &[bool] {
        &self.valid
    }
}

#[derive(Debug)]
pub struct StepOutcome {
    pub graph: StateGraph,
    pub masks: Vec<ActionMask>,
    /// One reward per agent that acted (live allies of the pre-step state).
    pub rewards: Vec<f64>,
    pub done: bool,
    pub victory: bool,
}

/// Move deltas in action-id order: north, south, west, east.
const MOVES: [(isize, isize); 4] = [(0, -1), (0, 1), (-1, 0), (1, 0)];

enum Decision {
    Stay,
    Move(usize),
    Attack(usize),
}

pub struct SkirmishEnv {
    cfg: EnvConfig,
    classes: ClassTable,
    relations: RelationMap,
    state: BattleState,
}

impl SkirmishEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let classes = cfg.class_table()?;
        let relations = build_relations(&classes)?;
        Ok(SkirmishEnv {
            cfg,
            classes,
            relations,
            state: BattleState {
                units: Vec::new(),
                step: 0,
                done: true,
                victory: false,
            },
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn class_table(&self) -> &ClassTable {
        &self.classes
    }

    pub fn relations(&self) -> &RelationMap {
        &self.relations
    }

    pub fn state(&self) -> &BattleState {
        &self.state
    }

    #[cfg(test)]
    pub(crate) fn state_mut(&mut self) -> &mut BattleState {
        &mut self.state
    }

    /// Spawns both teams at full hp inside their zones (allies west, enemies
    /// east), cells jittered by the seeded RNG.
    pub fn reset(&mut self, seed: u64) -> (StateGraph, Vec<ActionMask>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut units = Vec::with_capacity(self.cfg.unit_count());
        let ally_zone_w = (self.cfg.width / 4).max(1);
        let enemy_zone_x = self.cfg.width - ally_zone_w;
        let mut taken = std::collections::HashSet::new();
        let spawn = |rng: &mut ChaCha8Rng, x0: usize, zone_w: usize, taken: &mut std::collections::HashSet<(usize, usize)>| {
            loop {
                let x = x0 + rng.gen_range(0..zone_w);
                let y = rng.gen_range(0..self.cfg.height);
                if taken.insert((x, y)) {
                    return (x, y);
                }
            }
        };
        let rosters: [(Team, UnitKind, usize, usize); 4] = [
            (Team::Ally, UnitKind::Ranged, self.cfg.allies_ranged, 0),
            (Team::Ally, UnitKind::Melee, self.cfg.allies_melee, 0),
            (Team::Enemy, UnitKind::Ranged, self.cfg.enemies_ranged, enemy_zone_x),
            (Team::Enemy, UnitKind::Melee, self.cfg.enemies_melee, enemy_zone_x),
        ];
        for (team, kind, count, x0) in rosters {
            for _ in 0..count {
                let (x, y) = spawn(&mut rng, x0, ally_zone_w, &mut taken);
                units.push(Unit {
                    team,
                    kind,
                    x,
                    y,
                    hp: self.spec(kind).max_hp,
                    cooldown: 0,
                });
            }
        }
        self.state = BattleState {
            units,
            step: 0,
            done: false,
            victory: false,
        };
        (self.graph(), self.valid_actions())
    }

    fn spec(&self, kind: UnitKind) -> &UnitSpec {
        match kind {
            UnitKind::Ranged => &self.cfg.ranged,
            UnitKind::Melee => &self.cfg.melee,
        }
    }

    fn unit_spec(&self, id: usize) -> &UnitSpec {
        self.spec(self.state.units[id].kind)
    }

    /// Live ally unit ids, in unit-id order; the action order.
    pub fn live_allies(&self) -> Vec<usize> {
        self.state
            .units
            .iter()
            .enumerate()
            .filter(|(_, u)| u.team == Team::Ally && u.alive())
            .map(|(i, _)| i)
            .collect()
    }

    fn live_enemies(&self) -> Vec<usize> {
        self.state
            .units
            .iter()
            .enumerate()
            .filter(|(_, u)| u.team == Team::Enemy && u.alive())
            .map(|(i, _)| i)
            .collect()
    }

    /// Grid id of the k-th enemy (target of attack action 4 + k).
    fn enemy_unit_id(&self, k: usize) -> usize {
        self.cfg.ally_count() + k
    }

    fn dist(&self, a: usize, b: usize) -> f64 {
        let ua = &self.state.units[a];
        let ub = &self.state.units[b];
        let dx = ua.x as f64 - ub.x as f64;
        let dy = ua.y as f64 - ub.y as f64;
        (dx * dx + dy * dy).sqrt()
    }

    fn occupied(&self, x: usize, y: usize, ignore: usize) -> bool {
        self.state
            .units
            .iter()
            .enumerate()
            .any(|(i, u)| i != ignore && u.alive() && u.x == x && u.y == y)
    }

    fn move_destination(&self, id: usize, dir: usize) -> Option<(usize, usize)> {
        let unit = &self.state.units[id];
        let speed = self.unit_spec(id).move_speed as isize;
        let (dx, dy) = MOVES[dir];
        let nx = unit.x as isize + dx * speed;
        let ny = unit.y as isize + dy * speed;
        if nx < 0 || ny < 0 || nx as usize >= self.cfg.width || ny as usize >= self.cfg.height {
            return None;
        }
        Some((nx as usize, ny as usize))
    }

    /// Mask for one unit: moves need an in-bounds unoccupied destination,
    /// attack k needs enemy k alive, in range, and cooldown 0; no-op is
    /// always valid. A dead unit gets no-op only.
    fn action_mask_for(&self, id: usize) -> ActionMask {
        let n = self.cfg.action_count();
        let mut valid = vec![false; n];
        valid[self.cfg.noop_action()] = true;
        let unit = &self.state.units[id];
        if !unit.alive() {
            return ActionMask::new(valid);
        }
        for dir in 0..4 {
            if let Some((x, y)) = self.move_destination(id, dir) {
                if !self.occupied(x, y, id) {
                    valid[dir] = true;
                }
            }
        }
        if unit.cooldown == 0 {
            let range = self.unit_spec(id).attack_range;
            for k in 0..self.cfg.enemy_count() {
                let target = self.enemy_unit_id(k);
                if self.state.units[target].alive() && self.dist(id, target) <= range {
                    valid[4 + k] = true;
                }
            }
        }
        ActionMask::new(valid)
    }

    /// Masks for the live allies, aligned with [`Self::live_allies`].
    pub fn valid_actions(&self) -> Vec<ActionMask> {
        self.live_allies()
            .into_iter()
            .map(|id| self.action_mask_for(id))
            .collect()
    }

    fn scripted_enemy_decision(&self, id: usize) -> Decision {
        let allies = self.live_allies();
        if allies.is_empty() {
            return Decision::Stay;
        }
        let nearest = *allies
            .iter()
            .min_by(|&&a, &&b| self.dist(id, a).total_cmp(&self.dist(id, b)))
            .expect("non-empty ally list");
        let unit = &self.state.units[id];
        let spec = self.unit_spec(id);
        if unit.cooldown == 0 && self.dist(id, nearest) <= spec.attack_range {
            return Decision::Attack(nearest);
        }
        // Move (or stay) to minimize distance to the nearest ally; staying
        // is the first candidate so ties keep the unit in place.
        let target = &self.state.units[nearest];
        let here = {
            let dx = unit.x as f64 - target.x as f64;
            let dy = unit.y as f64 - target.y as f64;
            (dx * dx + dy * dy).sqrt()
        };
        let mut best = (here, Decision::Stay);
        for dir in 0..4 {
            if let Some((x, y)) = self.move_destination(id, dir) {
                if self.occupied(x, y, id) {
                    continue;
                }
                let dx = x as f64 - target.x as f64;
                let dy = y as f64 - target.y as f64;
                let d = (dx * dx + dy * dy).sqrt();
                if d < best.0 {
                    best = (d, Decision::Move(dir));
                }
            }
        }
        best.1
    }

    /// Advances one step. `joint_action` carries one action id per live
    /// ally, in [`Self::live_allies`] order, each valid under the current
    /// mask.
    pub fn step(&mut self, joint_action: &[usize]) -> Result<StepOutcome> {
        if self.state.done {
            return Err(Error::Contract(
                "step called on a finished episode".into(),
            ));
        }
        let actors = self.live_allies();
        if joint_action.len() != actors.len() {
            return Err(Error::Contract(format!(
                "joint action has {} entries but {} agents are alive",
                joint_action.len(),
                actors.len()
            )));
        }

        let n_units = self.state.units.len();
        let mut decisions: Vec<Decision> = Vec::with_capacity(n_units);
        for _ in 0..n_units {
            decisions.push(Decision::Stay);
        }
        for (slot, (&id, &action)) in actors.iter().zip(joint_action).enumerate() {
            let mask = self.action_mask_for(id);
            if !mask.is_valid(action) {
                return Err(Error::Contract(format!(
                    "agent {id} (action slot {slot}) chose invalid action {action}"
                )));
            }
            decisions[id] = if action < 4 {
                Decision::Move(action)
            } else if action < 4 + self.cfg.enemy_count() {
                Decision::Attack(self.enemy_unit_id(action - 4))
            } else {
                Decision::Stay
            };
        }
        for id in self.live_enemies() {
            decisions[id] = self.scripted_enemy_decision(id);
        }

        // Phase 1: moves, unit-id order. A destination that became occupied
        // by an earlier mover cancels the move.
        for id in 0..n_units {
            if !self.state.units[id].alive() {
                continue;
            }
            if let Decision::Move(dir) = decisions[id] {
                if let Some((x, y)) = self.move_destination(id, dir) {
                    if !self.occupied(x, y, id) {
                        self.state.units[id].x = x;
                        self.state.units[id].y = y;
                    }
                }
            }
        }

        // Phase 2: attacks, unit-id order. All decided attacks land (even if
        // the attacker was just killed; decisions are simultaneous), but a
        // target already at 0 hp absorbs nothing. Damage reward counts the hp
        // actually removed; the killing blow earns the kill credit.
        let mut rewards = vec![0.0f64; actors.len()];
        let mut attacked = vec![false; n_units];
        let enemy_hp_total = self.cfg.enemy_total_max_hp();
        for id in 0..n_units {
            if let Decision::Attack(target) = decisions[id] {
                if !self.state.units[target].alive() {
                    continue;
                }
                let dmg = self.unit_spec(id).attack_damage.min(self.state.units[target].hp);
                self.state.units[target].hp -= dmg;
                attacked[id] = true;
                if self.state.units[id].team == Team::Ally {
                    let slot = actors.iter().position(|&a| a == id).expect("actor id");
                    rewards[slot] += dmg / enemy_hp_total;
                    if !self.state.units[target].alive() {
                        rewards[slot] += 0.5;
                    }
                }
            }
        }

        // Cooldowns: attackers reset to their spec value, then every live
        // unit ticks down by one, so cooldown c allows an attack every c
        // steps.
        for id in 0..n_units {
            if attacked[id] {
                self.state.units[id].cooldown = self.unit_spec(id).cooldown;
            }
            if self.state.units[id].alive() {
                self.state.units[id].cooldown = self.state.units[id].cooldown.saturating_sub(1);
            }
        }

        self.state.step += 1;
        let allies_alive = !self.live_allies().is_empty();
        let enemies_alive = !self.live_enemies().is_empty();
        self.state.victory = !enemies_alive;
        self.state.done =
            !allies_alive || !enemies_alive || self.state.step >= self.cfg.step_limit;
        if self.state.victory {
            for r in rewards.iter_mut() {
                *r += 1.0;
            }
        }

        Ok(StepOutcome {
            graph: self.graph(),
            masks: self.valid_actions(),
            rewards,
            done: self.state.done,
            victory: self.state.victory,
        })
    }

    fn node_class(&self, unit: &Unit) -> NodeClassId {
        match (unit.team, unit.kind) {
            (Team::Ally, UnitKind::Ranged) => NodeClassId(0),
            (Team::Ally, UnitKind::Melee) => NodeClassId(1),
            (Team::Enemy, UnitKind::Ranged) => NodeClassId(2),
            (Team::Enemy, UnitKind::Melee) => NodeClassId(3),
        }
    }

    fn node_features(&self, unit: &Unit) -> Vec<f64> {
        let spec = self.spec(unit.kind);
        let mut f = vec![
            unit.hp / spec.max_hp,
            unit.x as f64 / self.cfg.width as f64,
            unit.y as f64 / self.cfg.height as f64,
            unit.cooldown as f64 / spec.cooldown as f64,
        ];
        if unit.kind == UnitKind::Ranged {
            f.push(match unit.team {
                Team::Ally => 0.0,
                Team::Enemy => 1.0,
            });
        }
        f
    }

    /// Current state as a graph with the configured communication settings.
    pub fn graph(&self) -> StateGraph {
        self.graph_with(self.cfg.obs_radius, self.cfg.fac)
    }

    /// Graph under explicit communication settings. Every unit is a node
    /// (ids stable across an episode); arcs run from live units to live
    /// ally agents within `obs_radius`, plus all ordered live-ally pairs
    /// when `fac` is set.
    pub fn graph_with(&self, obs_radius: f64, fac: bool) -> StateGraph {
        let nodes: Vec<(NodeClassId, Vec<f64>)> = self
            .state
            .units
            .iter()
            .map(|u| (self.node_class(u), self.node_features(u)))
            .collect();
        let agent_ids = self.live_allies();
        let mut arcs = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut push = |arcs: &mut Vec<GraphArc>, src: usize, dst: usize| {
            let relation = self
                .relations
                .relation_of(nodes[dst].0, nodes[src].0)
                .expect("arc target is an agent class");
            if seen.insert((src, dst)) {
                arcs.push(GraphArc { src, dst, relation });
            }
        };
        for &dst in &agent_ids {
            for (src, unit) in self.state.units.iter().enumerate() {
                if src == dst || !unit.alive() {
                    continue;
                }
                if self.dist(src, dst) <= obs_radius {
                    push(&mut arcs, src, dst);
                }
            }
        }
        if fac {
            for &a in &agent_ids {
                for &b in &agent_ids {
                    if a != b {
                        push(&mut arcs, a, b);
                    }
                }
            }
        }
        StateGraph::new(nodes, arcs, agent_ids)
    }
}

/// Uniform choice among each agent's valid actions.
pub fn random_policy(masks: &[ActionMask], rng: &mut impl Rng) -> Vec<usize> {
    masks
        .iter()
        .map(|m| {
            let valid = m.valid_actions();
            valid[rng.gen_range(0..valid.len())]
        })
        .collect()
}
