use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use super::*;
use crate::domain::raster::render_scene;
use crate::domain::{
    ActionProposal as P, Label, OperationKind, ProposalSet, SceneShape, ShapeKind,
};
use crate::exec::{ExecError, ExecInput, ExecOutput, MockExecutor, VerifierScoreRecord};
use crate::planning::{build_dag, PlanDag};
use crate::registry::{ModelDescriptor, Registry};
use OperationKind::*;

fn shape(label: &str, kind: ShapeKind, x: u32, y: u32, w: u32, h: u32) -> SceneShape {
    SceneShape {
        label: Label::new(label).unwrap(),
        kind,
        x,
        y,
        w,
        h,
    }
}

fn write_scene(dir: &Path, name: &str, scene: &SceneSpec) -> ImageRef {
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, serde_json::to_string(scene).unwrap()).unwrap();
    ImageRef::from_path(name, &path).unwrap()
}

fn dogs_lemons_scenes() -> [SceneSpec; 2] {
    [
        SceneSpec::new(
            48,
            32,
            vec![
                shape("dogs", ShapeKind::Rect, 2, 2, 10, 8),
                shape("lemons", ShapeKind::Ellipse, 20, 4, 9, 7),
                shape("dogs", ShapeKind::Ellipse, 30, 18, 12, 10),
            ],
        )
        .unwrap(),
        SceneSpec::new(
            40,
            30,
            vec![
                shape("lemons", ShapeKind::Ellipse, 3, 3, 8, 8),
                shape("cats", ShapeKind::Rect, 15, 15, 6, 6),
            ],
        )
        .unwrap(),
    ]
}

/// Replays verifier scores; 1.0 once the script runs out.
struct ScriptedVerifier(Mutex<VecDeque<f64>>);

impl ScriptedVerifier {
    fn new(scores: &[f64]) -> Self {
        Self(Mutex::new(scores.iter().copied().collect()))
    }
}

impl Verifier for ScriptedVerifier {
    fn verify(
        &self,
        _: &ExecOutput,
        _: &ExecInput,
        _: Option<&SceneSpec>,
    ) -> Result<VerifierScoreRecord, ExecError> {
        let score = self.0.lock().unwrap().pop_front().unwrap_or(1.0);
        Ok(VerifierScoreRecord::new(score, "scripted", ""))
    }
}

/// Constant score for one op, perfect otherwise.
struct OpVerifier(OperationKind, f64);

impl Verifier for OpVerifier {
    fn verify(
        &self,
        _: &ExecOutput,
        input: &ExecInput,
        _: Option<&SceneSpec>,
    ) -> Result<VerifierScoreRecord, ExecError> {
        let score = if input.op == self.0 { self.1 } else { 1.0 };
        Ok(VerifierScoreRecord::new(score, "op", ""))
    }
}

struct Fixture {
    registry: Registry,
    scenes: SceneCatalog,
    images: Vec<ImageRef>,
    cfg: EngineConfig,
    gates: SerialGates,
}

impl Fixture {
    fn new(registry: Registry, scene: SceneSpec) -> Self {
        let image = ImageRef {
            id: "img".into(),
            width: scene.width,
            height: scene.height,
            source: ImageSource::Scene("img.json".into()),
        };
        let mut scenes = SceneCatalog::default();
        scenes.insert("img", scene);
        Self {
            registry,
            scenes,
            images: vec![image],
            cfg: EngineConfig::default(),
            gates: SerialGates::default(),
        }
    }

    fn ctx<'a>(&'a self, executor: &'a dyn Executor, verifier: &'a dyn Verifier) -> ScheduleContext<'a> {
        ScheduleContext {
            registry: &self.registry,
            executor,
            verifier,
            scenes: &self.scenes,
            images: &self.images,
            cfg: &self.cfg,
            gates: &self.gates,
        }
    }

    fn dag(&self, items: Vec<P>) -> PlanDag {
        let mut dag = build_dag(&ProposalSet::new(items).unwrap(), &self.images).unwrap();
        dag.bind_models(&self.registry);
        dag
    }
}

fn two_dogs() -> SceneSpec {
    SceneSpec::new(
        32,
        16,
        vec![
            shape("dogs", ShapeKind::Rect, 2, 4, 6, 5),
            shape("dogs", ShapeKind::Rect, 20, 4, 6, 5),
        ],
    )
    .unwrap()
}

#[test]
fn retry_then_succeed() {
    let fx = Fixture::new(Registry::with_mocks(), two_dogs());
    let dag = fx.dag(vec![P::on(Locate, "dogs")]);
    let verifier = ScriptedVerifier::new(&[0.3, 0.9]);
    let result = run_node(&dag.nodes[0], &BTreeMap::new(), &fx.ctx(&MockExecutor, &verifier));
    assert_eq!(result.status, NodeStatus::Succeeded);
    assert_eq!(result.attempts.len(), 2);
    assert_eq!(result.attempts[0].outcome, AttemptOutcome::BelowThreshold);
    assert_eq!(result.best_score, Some(0.9));
}

#[test]
fn exhaustion_counts_every_model() {
    let registry = Registry::with_mocks();
    registry
        .register(ModelDescriptor::new("backup-detector", [Locate]).quality(0.5))
        .unwrap();
    let fx = Fixture::new(registry, two_dogs());
    let dag = fx.dag(vec![P::on(Locate, "dogs")]);
    let verifier = OpVerifier(Locate, 0.3);
    let result = run_node(&dag.nodes[0], &BTreeMap::new(), &fx.ctx(&MockExecutor, &verifier));
    assert_eq!(result.status, NodeStatus::FailedVerification);
    assert_eq!(result.attempts.len(), 3 * 2);
    assert_eq!(result.best_score, Some(0.3));
    assert_eq!(result.model_id.as_deref(), Some("backup-detector"));
    assert_eq!(result.outputs.len(), 1, "best output is kept");
}

/// Fails every call routed to models whose id starts with `remote`.
struct FlakyRemote;

impl Executor for FlakyRemote {
    fn execute(
        &self,
        model: &ModelDescriptor,
        input: &ExecInput,
        scene: Option<&SceneSpec>,
    ) -> Result<ExecOutput, ExecError> {
        if model.id.starts_with("remote") {
            return Err(ExecError::RemoteUnavailable("connection refused".into()));
        }
        MockExecutor.execute(model, input, scene)
    }
}

#[test]
fn failover_to_next_model() {
    let registry = Registry::with_mocks();
    registry
        .register(
            ModelDescriptor::new("remote-detector", [Locate])
                .quality(0.95)
                .endpoint("http://127.0.0.1:9"),
        )
        .unwrap();
    let mut fx = Fixture::new(registry, two_dogs());
    fx.cfg.retry_budget = 0;
    let dag = fx.dag(vec![P::on(Locate, "dogs")]);
    assert_eq!(dag.nodes[0].model_id.as_deref(), Some("remote-detector"));
    let verifier = StandardVerifier::default();
    let result = run_node(&dag.nodes[0], &BTreeMap::new(), &fx.ctx(&FlakyRemote, &verifier));
    assert_eq!(result.status, NodeStatus::Succeeded);
    assert_eq!(result.attempts.len(), 2);
    assert!(matches!(result.attempts[0].outcome, AttemptOutcome::ExecutionError(_)));
    assert_eq!(result.model_id.as_deref(), Some("mock-detector"));
    assert_eq!(result.best_score, Some(1.0));
}

/// Records the inputs it sees, then defers to the mocks.
#[derive(Default)]
struct Recording(Mutex<Vec<ExecInput>>);

impl Executor for Recording {
    fn execute(
        &self,
        model: &ModelDescriptor,
        input: &ExecInput,
        scene: Option<&SceneSpec>,
    ) -> Result<ExecOutput, ExecError> {
        self.0.lock().unwrap().push(input.clone());
        MockExecutor.execute(model, input, scene)
    }
}

#[test]
fn segment_receives_upstream_boxes() {
    let fx = Fixture::new(Registry::with_mocks(), two_dogs());
    let dag = fx.dag(vec![P::on(Locate, "dogs"), P::on(Segment, "dogs")]);
    let recording = Recording::default();
    let verifier = StandardVerifier::default();
    let results = schedule(&dag, &fx.ctx(&recording, &verifier), &NoopObserver);
    assert!(results.iter().all(NodeResult::succeeded));
    let boxes: Vec<_> = results[0].outputs[0].output.detections.iter().map(|d| d.bbox).collect();
    assert_eq!(boxes.len(), 2);
    let seen = recording.0.lock().unwrap();
    let segment = seen.iter().find(|i| i.op == Segment).unwrap();
    assert_eq!(segment.regions.as_ref(), Some(&boxes));
    assert_eq!(results[1].outputs[0].output.masks.len(), 2);
}

#[test]
fn region_blind_model_gets_no_regions() {
    let registry = Registry::from_descriptors([
        ModelDescriptor::new("det", [Locate]),
        ModelDescriptor::new("seg", [Segment]),
    ])
    .unwrap();
    let fx = Fixture::new(registry, two_dogs());
    let dag = fx.dag(vec![P::on(Locate, "dogs"), P::on(Segment, "dogs")]);
    let recording = Recording::default();
    let verifier = StandardVerifier::default();
    schedule(&dag, &fx.ctx(&recording, &verifier), &NoopObserver);
    let seen = recording.0.lock().unwrap();
    assert!(seen.iter().all(|i| i.regions.is_none()));
}

#[derive(Default)]
struct EventLog(Mutex<Vec<ScheduleEvent>>);

impl ScheduleObserver for EventLog {
    fn on_event(&self, event: &ScheduleEvent) {
        self.0.lock().unwrap().push(event.clone());
    }
}

#[test]
fn failed_middle_skips_downstream() {
    let fx = Fixture::new(Registry::with_mocks(), two_dogs());
    let dag = fx.dag(vec![
        P::on(Locate, "dogs"),
        P::on(Segment, "dogs"),
        P::on(Edit, "dogs").with_instruction("paint them"),
    ]);
    assert_eq!(dag.edges(), vec![(0, 1), (1, 2)]);
    let verifier = OpVerifier(Segment, 0.1);
    let log = EventLog::default();
    let results = schedule(&dag, &fx.ctx(&MockExecutor, &verifier), &log);
    let statuses: Vec<_> = results.iter().map(|r| r.status).collect();
    assert_eq!(
        statuses,
        [NodeStatus::Succeeded, NodeStatus::FailedVerification, NodeStatus::Skipped]
    );
    assert_eq!(results[1].attempts.len(), 3);
    assert!(results[2].attempts.is_empty());
    assert_eq!(log.0.lock().unwrap().last(), Some(&ScheduleEvent::Skipped { node_id: 2 }));
}

/// Sleeps inside `execute` and tracks how many calls overlap.
#[derive(Default)]
struct Gauge {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl Executor for Gauge {
    fn execute(
        &self,
        model: &ModelDescriptor,
        input: &ExecInput,
        scene: Option<&SceneSpec>,
    ) -> Result<ExecOutput, ExecError> {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(Duration::from_millis(20));
        self.current.fetch_sub(1, Ordering::SeqCst);
        MockExecutor.execute(model, input, scene)
    }
}

#[test]
fn parallelism_is_bounded() {
    let mut fx = Fixture::new(Registry::with_mocks(), two_dogs());
    fx.cfg.max_parallel = 4;
    let dag = fx.dag((0..8).map(|_| P::on(Locate, "dogs")).collect());
    let gauge = Gauge::default();
    let verifier = StandardVerifier::default();
    let results = schedule(&dag, &fx.ctx(&gauge, &verifier), &NoopObserver);
    assert!(results.iter().all(|r| r.succeeded() && r.attempts.len() == 1));
    let peak = gauge.peak.load(Ordering::SeqCst);
    assert!(peak <= 4 && peak >= 2, "peak {peak}");
}

#[test]
fn serial_models_never_overlap() {
    let registry = Registry::from_descriptors([ModelDescriptor::new("det", [Locate]).serial()]).unwrap();
    let mut fx = Fixture::new(registry, two_dogs());
    fx.cfg.max_parallel = 4;
    let dag = fx.dag((0..6).map(|_| P::on(Locate, "dogs")).collect());
    let gauge = Gauge::default();
    let verifier = StandardVerifier::default();
    schedule(&dag, &fx.ctx(&gauge, &verifier), &NoopObserver);
    assert_eq!(gauge.peak.load(Ordering::SeqCst), 1);
}

#[test]
fn dogs_lemons_schedule_order() {
    let fx = Fixture::new(Registry::with_mocks(), two_dogs());
    let dag = fx.dag(vec![
        P::on(Locate, "dogs"),
        P::on(Segment, "dogs"),
        P::on(Locate, "lemons"),
        P::on(Segment, "lemons"),
        P::integrate(),
    ]);
    let log = EventLog::default();
    let verifier = StandardVerifier::default();
    let results = schedule(&dag, &fx.ctx(&MockExecutor, &verifier), &log);
    assert!(results.iter().all(NodeResult::succeeded));
    let events = log.0.lock().unwrap();
    let pos = |e: ScheduleEvent| events.iter().position(|x| *x == e).unwrap();
    let finished = |id| ScheduleEvent::Finished {
        node_id: id,
        status: NodeStatus::Succeeded,
    };
    assert!(pos(finished(0)) < pos(ScheduleEvent::Started { node_id: 1 }));
    assert!(pos(finished(2)) < pos(ScheduleEvent::Started { node_id: 3 }));
    for id in 0..4 {
        assert!(pos(finished(id)) < pos(ScheduleEvent::Started { node_id: 4 }));
    }
}

fn one_image_dag(scene: &SceneSpec, items: Vec<P>) -> (PlanDag, SceneCatalog) {
    let image = ImageRef {
        id: "img".into(),
        width: scene.width,
        height: scene.height,
        source: ImageSource::Scene("img.json".into()),
    };
    let mut scenes = SceneCatalog::default();
    scenes.insert("img", scene.clone());
    let dag = build_dag(&ProposalSet::new(items).unwrap(), &[image]).unwrap();
    (dag, scenes)
}

fn segment_result(node_id: usize, masks: Vec<crate::domain::InstanceMask>) -> NodeResult {
    NodeResult {
        node_id,
        op: Segment,
        target: masks.first().map(|m| m.label.clone()),
        model_id: Some("m".into()),
        attempts: Vec::new(),
        outputs: vec![ImageOutput {
            image_index: 0,
            image_id: "img".into(),
            output: ExecOutput {
                masks,
                ..Default::default()
            },
        }],
        status: NodeStatus::Succeeded,
        best_score: Some(1.0),
        error: None,
    }
}

#[test]
fn single_mask_blends_red() {
    let scene = SceneSpec::new(4, 2, vec![]).unwrap();
    let (dag, scenes) = one_image_dag(&scene, vec![P::on(Segment, "frogs")]);
    let bbox = crate::domain::BBox::new(1, 0, 1, 1).unwrap();
    let mask = crate::domain::MaskRle::from_box(4, 2, &bbox);
    let frog = crate::domain::InstanceMask::new(Label::new("frogs").unwrap(), 0, mask);
    let out = integrate(&dag, &[segment_result(0, vec![frog])], &scenes);
    assert_eq!(out.summary.instances[0].color, crate::domain::Rgb([255, 0, 0]));
    let img = &out.composites[0].2;
    assert_eq!(img.get_pixel(1, 0).0, [245, 118, 118]);
    assert_eq!(img.get_pixel(0, 0).0, [235, 235, 235]);
}

#[test]
fn empty_results_copy_the_base() {
    let scene = two_dogs();
    let (dag, scenes) = one_image_dag(&scene, vec![P::on(Locate, "cats")]);
    let empty = NodeResult {
        op: Locate,
        target: Some(Label::new("cats").unwrap()),
        ..segment_result(0, vec![])
    };
    let out = integrate(&dag, &[empty], &scenes);
    assert_eq!(out.composites[0].2, render_scene(&scene));
    assert_eq!(out.summary.notes, vec!["no instances found".to_string()]);
    assert_eq!(out.summary.target_counts.get("cats"), Some(&0));
}

#[test]
fn frog_instances_get_distinct_colors() {
    let scene = SceneSpec::new(
        20,
        10,
        vec![
            shape("frogs", ShapeKind::Rect, 1, 1, 4, 4),
            shape("frogs", ShapeKind::Rect, 10, 2, 5, 5),
        ],
    )
    .unwrap();
    let (mut dag, scenes) = one_image_dag(&scene, vec![P::on(Segment, "frogs")]);
    let registry = Registry::with_mocks();
    dag.bind_models(&registry);
    let fx = Fixture::new(registry, scene.clone());
    let verifier = StandardVerifier::default();
    let results = schedule(&dag, &fx.ctx(&MockExecutor, &verifier), &NoopObserver);
    let out = integrate(&dag, &results, &scenes);
    let colors: Vec<_> = out.summary.instances.iter().map(|i| i.color).collect();
    assert_eq!(colors, vec![crate::domain::palette_color(0), crate::domain::palette_color(1)]);
    assert_ne!(colors[0], colors[1]);
    assert_eq!(out.summary.target_counts.get("frogs"), Some(&2));
}

#[test]
fn lone_locate_draws_outlines() {
    let scene = two_dogs();
    let (mut dag, scenes) = one_image_dag(&scene, vec![P::on(Locate, "dogs")]);
    let registry = Registry::with_mocks();
    dag.bind_models(&registry);
    let fx = Fixture::new(registry, scene.clone());
    let verifier = StandardVerifier::default();
    let results = schedule(&dag, &fx.ctx(&MockExecutor, &verifier), &NoopObserver);
    let out = integrate(&dag, &results, &scenes);
    let img = &out.composites[0].2;
    assert_eq!(out.summary.boxes.len(), 2);
    assert_eq!(img.get_pixel(2, 4).0, [255, 0, 0]);
    assert_eq!(img.get_pixel(7, 8).0, [255, 0, 0]);
    assert_eq!(img.get_pixel(4, 6).0, [128, 128, 128], "interior untouched");
}

#[test]
fn mismatched_raster_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("a.ppm");
    std::fs::write(&path, b"P6\n2 2\n255\n............").unwrap();
    let mut image = ImageRef::from_path("a", &path).unwrap();
    image.width = 3;
    assert!(matches!(
        integrate::base_image(&image, &SceneCatalog::default()),
        Err(EngineError::CompositingFailure(_))
    ));
}

fn engine_cfg(dir: &Path) -> EngineConfig {
    EngineConfig {
        run_dir: dir.join("runs"),
        ..EngineConfig::default()
    }
}

#[test]
fn dogs_and_lemons_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let [a, b] = dogs_lemons_scenes();
    let images = vec![write_scene(dir.path(), "a", &a), write_scene(dir.path(), "b", &b)];
    let engine = Engine::new(Arc::new(Registry::with_mocks()));
    let cfg = engine_cfg(dir.path());
    let record = engine
        .run_request("Find dogs and lemons in the images and then highlight them only", &images, &cfg)
        .unwrap();
    assert_eq!(record.summary.planner, FALLBACK_PLANNER);
    let mut edges = record.dag.edges();
    edges.sort();
    assert_eq!(edges, vec![(0, 1), (0, 4), (1, 4), (2, 3), (2, 4), (3, 4)]);
    assert!(record.node_results.iter().all(NodeResult::succeeded));
    assert!(record.node_results.iter().all(|r| r.attempts.len() <= 1));
    assert_eq!(record.summary.instances.len(), 2 + 2);
    assert_eq!(record.summary.target_counts["dogs"], 2);
    assert_eq!(record.summary.target_counts["lemons"], 2);
    assert_eq!(record.artifacts.len(), 2);
    let store = RunStore::open(&cfg.run_dir).unwrap();
    assert_eq!(store.load(&record.run_id).unwrap(), record);
    assert!(store.artifact(&record.run_id, "composite-1.ppm").unwrap().starts_with(b"P6\n40 30\n255\n"));
}

#[test]
fn deterministic_artifacts_with_one_worker() {
    let dir = tempfile::tempdir().unwrap();
    let [a, b] = dogs_lemons_scenes();
    let images = vec![write_scene(dir.path(), "a", &a), write_scene(dir.path(), "b", &b)];
    let engine = Engine::new(Arc::new(Registry::with_mocks()));
    let mut cfg = engine_cfg(dir.path());
    cfg.max_parallel = 1;
    let request = "highlight dogs and lemons";
    let r1 = engine.run_request(request, &images, &cfg).unwrap();
    let r2 = engine.run_request(request, &images, &cfg).unwrap();
    assert!(r1.run_id < r2.run_id);
    assert_eq!(r1.summary, r2.summary);
    assert_eq!(r1.node_results, r2.node_results);
    let store = RunStore::new(&cfg.run_dir).unwrap();
    for name in ["composite-0.ppm", "composite-1.ppm"] {
        assert_eq!(
            store.artifact(&r1.run_id, name).unwrap(),
            store.artifact(&r2.run_id, name).unwrap()
        );
    }
}

#[test]
fn absent_objects_note() {
    let dir = tempfile::tempdir().unwrap();
    let images = vec![write_scene(dir.path(), "a", &two_dogs())];
    let engine = Engine::new(Arc::new(Registry::with_mocks()));
    let record = engine
        .run_request("Find the guitar and segment it", &images, &engine_cfg(dir.path()))
        .unwrap();
    assert!(record.node_results.iter().all(NodeResult::succeeded));
    assert!(record.node_results[0].outputs[0].output.detections.is_empty());
    assert!(record.summary.notes.contains(&"no instances found".to_string()));
}

#[test]
fn planner_fallback_and_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let images = vec![write_scene(dir.path(), "a", &two_dogs())];
    let engine = Engine::new(Arc::new(Registry::with_mocks())).with_planners(vec![
        PlannerBackend::scripted("broken", vec![vec!["locate dogs".into(), "???".into()]]),
        PlannerBackend::scripted("empty", vec![]),
    ]);
    let record = engine
        .run_request("find dogs", &images, &engine_cfg(dir.path()))
        .unwrap();
    assert_eq!(record.summary.planner, "rule-based");
    assert_eq!(record.candidates.len(), 3);
    assert!(!record.candidates[0].parsed && record.candidates[2].parsed);

    let scripted = Engine::new(Arc::new(Registry::with_mocks())).with_planners(vec![
        PlannerBackend::scripted(
            "llm",
            vec![vec![r#""locate" dogs; "locate" dogs;"#.into(), r#""locate" dogs;"#.into()]],
        ),
    ]);
    let record = scripted
        .run_request("find dogs", &images, &engine_cfg(dir.path()))
        .unwrap();
    assert_eq!(record.summary.planner, "llm");
    assert_eq!(record.summary.proposals, r#""locate" dogs;"#);
}

#[test]
fn run_request_rejects_bad_input() {
    let dir = tempfile::tempdir().unwrap();
    let images = vec![write_scene(dir.path(), "a", &two_dogs())];
    let engine = Engine::new(Arc::new(Registry::with_mocks()));
    let cfg = engine_cfg(dir.path());
    assert!(matches!(engine.run_request(" ", &images, &cfg), Err(EngineError::InvalidInput(_))));
    assert!(matches!(engine.run_request("find dogs", &[], &cfg), Err(EngineError::InvalidInput(_))));
    let bad = EngineConfig {
        verify_threshold: 1.5,
        ..cfg.clone()
    };
    assert!(matches!(engine.run_request("find dogs", &images, &bad), Err(EngineError::InvalidConfig(_))));
}

fn sample_record(dir: &Path) -> RunRecord {
    let images = vec![write_scene(dir, "a", &two_dogs())];
    Engine::new(Arc::new(Registry::with_mocks()))
        .run_request("highlight dogs", &images, &engine_cfg(dir))
        .unwrap()
}

#[test]
fn store_round_trip_and_index() {
    let dir = tempfile::tempdir().unwrap();
    let mut record = sample_record(dir.path());
    let store = RunStore::open(dir.path().join("other")).unwrap();
    assert!(matches!(store.load("01NOPE"), Err(EngineError::RunNotFound(_))));
    assert!(matches!(store.load("../x"), Err(EngineError::RunNotFound(_))));
    record.run_id = new_run_id();
    let first = record.run_id.clone();
    store.persist(&record, &[("composite-0.ppm".into(), vec![1, 2])]).unwrap();
    assert_eq!(store.load(&first).unwrap(), record);
    assert!(store.persist(&record, &[]).is_err(), "records are immutable");
    record.run_id = new_run_id();
    store.persist(&record, &[]).unwrap();
    let ids = store.list().unwrap();
    assert_eq!(ids, vec![first.clone(), record.run_id.clone()]);
    assert_eq!(store.artifact(&first, "composite-0.ppm").unwrap(), vec![1, 2]);
    assert!(matches!(store.artifact(&first, "../record.json"), Err(EngineError::RunNotFound(_))));
}

#[test]
fn crash_before_rename_leaves_index_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let mut record = sample_record(dir.path());
    let store = RunStore::open(dir.path().join("crash")).unwrap();
    record.run_id = new_run_id();
    store.persist(&record, &[]).unwrap();
    let kept = record.run_id.clone();

    record.run_id = new_run_id();
    let staged = store.stage(&record, &[]).unwrap();
    drop(staged);
    assert_eq!(store.list().unwrap(), vec![kept.clone()]);
    assert!(matches!(store.load(&record.run_id), Err(EngineError::RunNotFound(_))));

    let reopened = RunStore::open(store.dir()).unwrap();
    let leftovers: Vec<_> = std::fs::read_dir(store.dir())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(".tmp-"))
        .collect();
    assert!(leftovers.is_empty());
    assert_eq!(reopened.list().unwrap(), vec![kept]);
}

#[test]
fn open_reindexes_runs_missing_from_index() {
    let dir = tempfile::tempdir().unwrap();
    let record = sample_record(dir.path());
    let runs = dir.path().join("runs");
    std::fs::write(runs.join("index.json"), "[]").unwrap();
    let store = RunStore::open(&runs).unwrap();
    assert_eq!(store.list().unwrap(), vec![record.run_id]);
}

#[test]
fn config_validation() {
    EngineConfig::default().validate().unwrap();
    let cfg: EngineConfig = serde_json::from_str(r#"{"retry_budget": 0}"#).unwrap();
    assert_eq!(cfg.retry_budget, 0);
    assert_eq!(cfg.max_parallel, 4);
    for bad in [
        EngineConfig { max_parallel: 0, ..Default::default() },
        EngineConfig { lambda: 0.0, ..Default::default() },
        EngineConfig { verify_threshold: -0.1, ..Default::default() },
    ] {
        assert!(bad.validate().is_err());
    }
}
