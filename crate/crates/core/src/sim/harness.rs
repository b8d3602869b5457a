use crate::centroidal::{CentroidalState, GaitSpec, Phase, StanceSide, Vec2, Vec3};
use crate::closed_form::{flight_flow, stance_flow, StepContext};
use crate::controller::{touchdown_flight_time, ControllerInputs, Landing, Relaxation, StepCommand, StepController, TickOutcome};
use crate::error::{GaitError, Result};
use crate::nominal::NominalGait;
use crate::sim::log::{Failure, StepRecord, TickRecord, TrajectoryLog};
use crate::sim::scenario::{GaitKind, Scenario};

/// Slack on the stance height limits before a run is declared failed.
const HEIGHT_TOL: f64 = 1e-6;

/// Instantaneous CoM velocity change; position is kept and the DCM follows.
pub fn apply_disturbance(state: &CentroidalState, dv: &Vec3, omega: f64) -> CentroidalState {
    let com_vel = state.com_vel + dv;
    CentroidalState {
        com_vel,
        dcm: state.com + com_vel / omega,
        ..*state
    }
}

/// `μ(z - z_cop) - |(x, y) - (x_vrp, y_vrp)|`; positive means the contact
/// force along CoP→CoM stays inside the friction cone.
pub fn friction_margin(state: &CentroidalState, ctx: &StepContext, mu_s: f64) -> f64 {
    let z_cop = ctx.vrp0.z - ctx.g / (ctx.omega * ctx.omega);
    let dx = state.com.x - ctx.vrp0.x;
    let dy = state.com.y - ctx.vrp0.y;
    mu_s * (state.com.z - z_cop) - dx.hypot(dy)
}

/// Frequency for a LIPM walking step that starts from `(z, ż)` over ground
/// `h`: the `ω` with `z + ż/ω = h + g/ω²`, which puts the vertical DCM on the
/// VRP.
pub fn walking_omega(z: f64, vz: f64, h: f64, g: f64) -> Result<f64> {
    let rise = z - h;
    let radicand = vz * vz + 4.0 * g * rise;
    if rise <= 0.0 || radicand < 0.0 {
        return Err(GaitError::StateInvalid(format!("CoM {rise} m above ground cannot walk")));
    }
    let u = (vz + radicand.sqrt()) / (2.0 * g);
    if u <= 0.0 {
        return Err(GaitError::StateInvalid("no positive walking frequency".into()));
    }
    Ok(1.0 / u)
}

/// Result of a run. Solver wall times are kept apart from the log so that
/// logs are reproducible.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub log: TrajectoryLog,
    pub solve_times: Vec<f64>,
}

struct Step {
    index: usize,
    side: StanceSide,
    kind: GaitKind,
    spec: GaitSpec,
    nominal: NominalGait,
    foothold: Vec3,
    t_start: f64,
    com_start: Vec3,
    /// Step clock of take-off, once it happened.
    takeoff: Option<f64>,
    /// Realized Γ after take-off.
    gamma: f64,
}

impl Step {
    fn vrp(&self) -> Vec3 {
        self.foothold + Vec3::new(0.0, 0.0, self.spec.vrp_height())
    }

    fn omega(&self) -> f64 {
        self.spec.omega
    }
}

struct Sim<'a> {
    sc: &'a Scenario,
    step: Step,
    /// State at the start of the current closed-form segment.
    seg: CentroidalState,
    state: CentroidalState,
    cmd: StepCommand,
    last: Option<TickOutcome>,
    controller: StepController,
    next_disturbance: usize,
    log: TrajectoryLog,
    solve_times: Vec<f64>,
}

enum Next {
    Takeoff(f64),
    Touchdown(f64),
}

impl<'a> Sim<'a> {
    fn new(sc: &'a Scenario) -> Result<Self> {
        let entry = sc.command_at(0.0);
        let spec = sc.gaits.get(entry.gait).with_velocity(entry.v_des);
        let nominal = NominalGait::new(&spec)?;
        let side = sc.initial_side;
        let foothold = Vec3::new(0.0, 0.0, sc.terrain.height(0.0, 0.0));
        let step = Step {
            index: 0,
            side,
            kind: entry.gait,
            spec,
            nominal,
            foothold,
            t_start: 0.0,
            com_start: Vec3::zeros(),
            takeoff: None,
            gamma: nominal.gamma_nom,
        };
        let state = nominal.initial_state(side, &step.vrp())?;
        let step = Step { com_start: state.com, ..step };
        let cmd = StepCommand::nominal(&nominal, side, &Vec2::new(foothold.x, foothold.y));
        Ok(Self {
            sc,
            step,
            seg: state,
            state,
            cmd,
            last: None,
            controller: StepController::new(),
            next_disturbance: 0,
            log: TrajectoryLog::default(),
            solve_times: Vec::new(),
        })
    }

    fn now(&self) -> f64 {
        self.step.t_start + self.state.t
    }

    fn ctx(&self) -> StepContext {
        StepContext {
            vrp0: self.step.vrp(),
            omega: self.step.omega(),
            gamma: self.step.gamma,
            t_f: self.cmd.t_f,
            stance_side: self.step.side,
            g: self.step.spec.g,
        }
    }

    /// Gait, velocity and touchdown target of the step after this one.
    fn next_gait(&self) -> Result<(GaitKind, GaitSpec, Landing)> {
        let entry = self.sc.command_at(self.now());
        let spec = self.sc.gaits.get(entry.gait).with_velocity(entry.v_des);
        let landing = match entry.gait {
            GaitKind::Running => Landing::from_nominal(&NominalGait::new(&spec)?),
            GaitKind::Walking => Landing {
                omega: spec.omega,
                dcm_height: spec.vrp_height(),
            },
        };
        Ok((entry.gait, spec, landing))
    }

    /// State of the current segment at step clock `clock`.
    fn evolve(&self, clock: f64) -> CentroidalState {
        let dt = clock - self.seg.t;
        match self.seg.phase {
            Phase::Stance => stance_flow(&self.seg, &self.step.vrp(), self.step.omega(), dt),
            Phase::Flight => flight_flow(&self.seg, self.step.omega(), self.step.spec.g, dt),
        }
    }

    fn next_phase_event(&self) -> Result<Next> {
        match self.state.phase {
            Phase::Stance => Ok(Next::Takeoff(self.cmd.t_s().max(self.state.t))),
            Phase::Flight => {
                let (_, _, landing) = self.next_gait()?;
                let h = self.sc.terrain.height(self.cmd.u.x, self.cmd.u.y);
                let tau = touchdown_flight_time(
                    self.seg.com.z,
                    self.seg.com_vel.z,
                    landing.omega,
                    self.step.spec.g,
                    h + landing.dcm_height,
                    self.state.t - self.seg.t,
                );
                Ok(Next::Touchdown(self.seg.t + tau))
            }
        }
    }

    fn record(&mut self, event: &str) {
        let st = self.state;
        let ctx = self.ctx();
        let (vrp, margin) = match st.phase {
            Phase::Stance => (ctx.vrp0, friction_margin(&st, &ctx, self.step.spec.mu_s)),
            Phase::Flight => (Vec3::repeat(f64::NAN), f64::NAN),
        };
        let (objective, relaxation) = self
            .last
            .as_ref()
            .map_or((f64::NAN, Relaxation::None), |o| (o.objective, o.relaxation));
        self.log.ticks.push(TickRecord {
            t: self.now(),
            step: self.step.index,
            side: self.step.side,
            gait: self.step.kind,
            phase: st.phase,
            com: st.com,
            com_vel: st.com_vel,
            dcm: st.dcm,
            vrp,
            foothold: self.step.foothold,
            u_next: self.cmd.u,
            gamma: self.cmd.gamma,
            t_s: self.cmd.t_s(),
            t_f: self.cmd.t_f,
            b: self.cmd.b,
            objective,
            relaxation,
            friction_margin: margin,
            event: event.to_string(),
        });
    }

    fn fail(&mut self, reason: String) {
        let t = self.now();
        self.record("failure");
        self.log.failure = Some(Failure { t, reason });
    }

    fn check_height(&self) -> Result<()> {
        if self.state.phase != Phase::Stance {
            return Ok(());
        }
        let rel = self.state.com.z - self.step.foothold.z;
        let spec = &self.step.spec;
        if rel < spec.z_min - HEIGHT_TOL || rel > spec.z_max + HEIGHT_TOL {
            return Err(GaitError::OutOfRange {
                what: "CoM height",
                value: rel,
                min: spec.z_min,
                max: spec.z_max,
            });
        }
        Ok(())
    }

    fn control(&mut self) -> Result<()> {
        let (_, _, landing) = self.next_gait()?;
        let inputs = ControllerInputs {
            state: self.state,
            ctx: self.ctx(),
            u0: Vec2::new(self.step.foothold.x, self.step.foothold.y),
            nominal: self.step.nominal,
            spec: self.step.spec,
            landing,
        };
        let out = self.controller.tick(&inputs)?;
        self.solve_times.push(out.solve_time);
        self.cmd = out.command;
        self.last = Some(out);
        Ok(())
    }

    fn relaxation_tag(&self) -> &'static str {
        match self.last.as_ref().map(|o| o.relaxation) {
            Some(Relaxation::None) | None => "",
            Some(_) => "viability_relaxed",
        }
    }

    fn takeoff(&mut self) -> Result<()> {
        self.check_height()?;
        let clock = self.state.t;
        self.step.takeoff = Some(clock);
        self.step.gamma = if clock == self.cmd.t_s() {
            self.cmd.gamma
        } else {
            (self.step.omega() * clock).exp()
        };
        if self.step.kind == GaitKind::Walking {
            self.record("takeoff");
            return self.touchdown();
        }
        self.state.phase = Phase::Flight;
        self.seg = self.state;
        self.record("takeoff");
        Ok(())
    }

    fn touchdown(&mut self) -> Result<()> {
        let takeoff = self.step.takeoff.expect("touchdown follows a take-off");
        let (kind, base, _) = self.next_gait()?;
        let g = base.g;
        let h = self.sc.terrain.height(self.cmd.u.x, self.cmd.u.y);
        let next_foot = Vec3::new(self.cmd.u.x, self.cmd.u.y, h);
        let omega = match kind {
            GaitKind::Running => base.omega,
            GaitKind::Walking => walking_omega(self.state.com.z, self.state.com_vel.z, h, g)?,
        };
        let spec = base.with_omega(omega);
        let nominal = NominalGait::new(&spec)?;
        let next_vrp = next_foot + Vec3::new(0.0, 0.0, spec.vrp_height());
        let t_now = self.now();
        self.log.steps.push(StepRecord {
            step: self.step.index,
            side: self.step.side,
            gait: self.step.kind,
            omega: self.step.omega(),
            t_start: self.step.t_start,
            foothold: self.step.foothold,
            com_start: self.step.com_start,
            t_end: t_now,
            com_end: self.state.com,
            t_s: takeoff,
            t_f: self.state.t - takeoff,
            next_foothold: next_foot,
            b: self.state.dcm - next_vrp,
        });
        let state = CentroidalState::new(self.state.com, self.state.com_vel, omega, 0.0, Phase::Stance)?;
        self.step = Step {
            index: self.step.index + 1,
            side: self.step.side.other(),
            kind,
            spec,
            nominal,
            foothold: next_foot,
            t_start: t_now,
            com_start: state.com,
            takeoff: None,
            gamma: nominal.gamma_nom,
        };
        self.state = state;
        self.seg = state;
        self.cmd = StepCommand::nominal(&nominal, self.step.side, &Vec2::new(next_foot.x, next_foot.y));
        self.control()?;
        let tag = format!("touchdown{}", self.relaxation_tag_suffix());
        self.record(&tag);
        Ok(())
    }

    fn relaxation_tag_suffix(&self) -> String {
        match self.relaxation_tag() {
            "" => String::new(),
            t => format!(";{t}"),
        }
    }

    /// Advance to global time `target`, handling every event on the way.
    fn advance(&mut self, target: f64) -> Result<()> {
        loop {
            let event = self.next_phase_event()?;
            let event_clock = match event {
                Next::Takeoff(c) | Next::Touchdown(c) => c,
            };
            let event_time = self.step.t_start + event_clock;
            let push_time = self.sc.disturbances.get(self.next_disturbance).map(|d| d.t);
            if event_time <= target && push_time.is_none_or(|p| event_time <= p) {
                self.state = self.evolve(event_clock);
                match event {
                    Next::Takeoff(_) => self.takeoff()?,
                    Next::Touchdown(_) => self.touchdown()?,
                }
                continue;
            }
            if let Some(p) = push_time.filter(|p| *p <= target) {
                let d = self.sc.disturbances[self.next_disturbance];
                self.next_disturbance += 1;
                self.state = self.evolve(p - self.step.t_start);
                self.state = apply_disturbance(&self.state, &d.dv, self.step.omega());
                self.seg = self.state;
                self.record("push");
                continue;
            }
            self.state = self.evolve(target - self.step.t_start);
            return Ok(());
        }
    }

    fn run(mut self) -> SimOutput {
        let rate = self.sc.control_rate;
        let n_ticks = (self.sc.duration * rate + 1e-9).floor() as usize;
        for k in 0..=n_ticks {
            let t = k as f64 / rate;
            let result = self
                .advance(t)
                .and_then(|_| self.check_height())
                .and_then(|_| self.control());
            if let Err(e) = result {
                self.fail(e.to_string());
                break;
            }
            let tag = self.relaxation_tag();
            self.record(tag);
        }
        SimOutput {
            log: self.log,
            solve_times: self.solve_times,
        }
    }
}

/// Run `sc` to completion or failure. Errors only for an invalid scenario.
pub fn run_scenario(sc: &Scenario) -> Result<SimOutput> {
    sc.validate()?;
    Ok(Sim::new(sc)?.run())
}
