//! Event-sourced campaign state.
//!
//! Every operation builds an [`Event`], plans its effect against the current
//! state (which is where all validation happens), appends the event to the
//! journal and only then commits the planned effect. Replaying a journal
//! runs the same plan/commit pair, so a journal that replays cleanly also
//! satisfies every referential check.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Campaign, CampaignSpec, CampaignStatus, Event, Journal, StoreError};
use crate::agreement::{
    agreement_report_with, build_reliability, timing_stats, AgreementReport, AlphaOptions,
    TimingStats,
};
use crate::hierarchy::{Hierarchy, HierarchyDocument};
use crate::localization::{expand_dataset, AnnotationTask, CropRect, Point};
use crate::outcomes::{audit_report, AuditReport, GoldAssignment, OutcomeError};
use crate::record::AnnotationRecord;
use crate::seed;
use crate::traversal::{
    current_question, now_ms, replay_session, start_session_at, stopped_on_unsure,
    submit_answer_at, AskAnswer, ClassificationSession, LabelingScheme, Prompt,
};

/// A live or finished service-side session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEntry {
    pub campaign_id: String,
    pub annotator_id: String,
    pub session: ClassificationSession,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
}

/// One annotator's ordered task list. Every annotator gets every task
/// (full overlap), in task order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub annotator_id: String,
    pub task_ids: Vec<String>,
    /// Index of the first task without a record.
    pub cursor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextTask {
    pub campaign_id: String,
    pub task: AnnotationTask,
    pub position: usize,
    pub total: usize,
    /// Unfinished session this annotator already has on the task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub open_session: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub annotator_id: String,
    pub done: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignStats {
    pub campaign_id: String,
    pub status: CampaignStatus,
    pub tasks: usize,
    pub records: usize,
    pub progress: Vec<Progress>,
    /// `None` while alpha is undefined (e.g. a single annotator).
    pub agreement: Option<AgreementReport>,
    pub timing: TimingStats,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audit: Option<AuditReport>,
    pub discharged: usize,
    pub stopped_on_unsure: usize,
    pub open_sessions: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// One line of an exported training manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportLine {
    pub task_id: String,
    pub image_uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crop: Option<CropRect>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polygon: Option<Vec<Point>>,
    /// Consensus label under the export scheme; `None` for unlabelled tasks.
    pub label: Option<String>,
    pub category_id: Option<String>,
    pub votes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Clone, Default)]
struct State {
    hierarchies: BTreeMap<String, Hierarchy>,
    campaigns: BTreeMap<String, Campaign>,
    golds: BTreeMap<String, Vec<GoldAssignment>>,
    sessions: BTreeMap<String, SessionEntry>,
    records: BTreeMap<String, AnnotationRecord>,
    /// (campaign, task, annotator) triples that already have a record.
    recorded: BTreeSet<(String, String, String)>,
}

/// Canonical serialized view used for the state digest.
#[derive(Serialize)]
struct Snapshot<'a> {
    hierarchies: BTreeMap<&'a str, HierarchyDocument>,
    campaigns: &'a BTreeMap<String, Campaign>,
    golds: &'a BTreeMap<String, Vec<GoldAssignment>>,
    sessions: &'a BTreeMap<String, SessionEntry>,
    records: &'a BTreeMap<String, AnnotationRecord>,
}

enum Effect {
    None,
    Hierarchy(Hierarchy),
    Campaign(Campaign),
    Open(String, Vec<AnnotationTask>),
    Close(String),
    Gold(String, Vec<GoldAssignment>),
    Session(String, SessionEntry),
    Answer(String, ClassificationSession, Option<AnnotationRecord>),
    Record(AnnotationRecord),
}

impl State {
    fn campaign(&self, id: &str) -> Result<&Campaign, StoreError> {
        self.campaigns
            .get(id)
            .ok_or_else(|| StoreError::UnknownCampaign(id.to_owned()))
    }

    fn hierarchy_of(&self, c: &Campaign) -> Result<&Hierarchy, StoreError> {
        self.hierarchies
            .get(&c.spec.hierarchy_version)
            .ok_or_else(|| StoreError::UnknownHierarchy(c.spec.hierarchy_version.clone()))
    }

    fn expect_status(c: &Campaign, expected: CampaignStatus) -> Result<(), StoreError> {
        if c.status != expected {
            return Err(StoreError::WrongStatus {
                campaign: c.id().to_owned(),
                status: c.status,
                expected,
            });
        }
        Ok(())
    }

    fn check_new_record(&self, r: &AnnotationRecord) -> Result<(), StoreError> {
        let key = (
            r.campaign_id.clone(),
            r.task_id.clone(),
            r.annotator_id.clone(),
        );
        if self.recorded.contains(&key) {
            return Err(StoreError::DuplicateRecord {
                campaign: key.0,
                task: key.1,
                annotator: key.2,
            });
        }
        if self.records.contains_key(&r.record_id) {
            return Err(StoreError::Invalid(format!(
                "record id `{}` reused",
                r.record_id
            )));
        }
        if matches!(r.ended_at, Some(e) if e < r.started_at) {
            return Err(StoreError::Invalid(format!(
                "record `{}` ends before it starts",
                r.record_id
            )));
        }
        Ok(())
    }

    fn next_record_id(&self) -> String {
        format!("r{:06}", self.records.len() + 1)
    }

    fn next_session_id(&self) -> String {
        format!("s{:06}", self.sessions.len() + 1)
    }

    fn plan(&self, ev: &Event) -> Result<Effect, StoreError> {
        match ev {
            Event::HierarchyRegistered { version, document } => {
                let h = Hierarchy::from_document(document.clone())?;
                if h.version() != version {
                    return Err(StoreError::Invalid(format!(
                        "hierarchy version `{version}` does not match its content (`{}`)",
                        h.version()
                    )));
                }
                if self.hierarchies.contains_key(version) {
                    return Ok(Effect::None);
                }
                Ok(Effect::Hierarchy(h))
            }
            Event::CampaignCreated { spec, at_ms } => {
                if self.campaigns.contains_key(&spec.campaign_id) {
                    return Err(StoreError::DuplicateCampaign(spec.campaign_id.clone()));
                }
                if spec.campaign_id.is_empty() {
                    return Err(StoreError::Invalid("empty campaign_id".into()));
                }
                let h = self
                    .hierarchies
                    .get(&spec.hierarchy_version)
                    .ok_or_else(|| StoreError::UnknownHierarchy(spec.hierarchy_version.clone()))?;
                let errors: Vec<_> = h.validate().into_iter().filter(|d| d.is_error()).collect();
                if !errors.is_empty() {
                    return Err(StoreError::UnusableHierarchy(errors));
                }
                expand_dataset(&spec.images, spec.strategy)?;
                Ok(Effect::Campaign(Campaign {
                    spec: spec.clone(),
                    status: CampaignStatus::Draft,
                    tasks: Vec::new(),
                    created_at: *at_ms,
                }))
            }
            Event::CampaignOpened {
                campaign_id, tasks, ..
            } => {
                let c = self.campaign(campaign_id)?;
                Self::expect_status(c, CampaignStatus::Draft)?;
                let expected = expand_dataset(&c.spec.images, c.spec.strategy)?;
                if &expected != tasks {
                    return Err(StoreError::Invalid(format!(
                        "task list for `{campaign_id}` does not match its dataset"
                    )));
                }
                Ok(Effect::Open(campaign_id.clone(), tasks.clone()))
            }
            Event::CampaignClosed { campaign_id, .. } => {
                let c = self.campaign(campaign_id)?;
                Self::expect_status(c, CampaignStatus::Open)?;
                Ok(Effect::Close(campaign_id.clone()))
            }
            Event::GoldLoaded { campaign_id, golds } => {
                let c = self.campaign(campaign_id)?;
                if c.status == CampaignStatus::Draft {
                    return Err(StoreError::WrongStatus {
                        campaign: campaign_id.clone(),
                        status: c.status,
                        expected: CampaignStatus::Open,
                    });
                }
                let h = self.hierarchy_of(c)?;
                let mut seen = BTreeSet::new();
                for g in golds {
                    if !seen.insert(g.task_id.as_str()) {
                        return Err(OutcomeError::DuplicateGold(g.task_id.clone()).into());
                    }
                    if c.task(&g.task_id).is_none() {
                        return Err(StoreError::UnknownTask(g.task_id.clone()));
                    }
                    if let Some(id) = &g.gold.node_id {
                        h.node(id)?;
                    }
                }
                Ok(Effect::Gold(campaign_id.clone(), golds.clone()))
            }
            Event::SessionStarted {
                session_id,
                campaign_id,
                task_id,
                annotator_id,
                at_ms,
            } => {
                if self.sessions.contains_key(session_id) {
                    return Err(StoreError::Invalid(format!(
                        "session id `{session_id}` reused"
                    )));
                }
                if annotator_id.is_empty() {
                    return Err(StoreError::Invalid("empty annotator_id".into()));
                }
                let c = self.campaign(campaign_id)?;
                Self::expect_status(c, CampaignStatus::Open)?;
                if c.task(task_id).is_none() {
                    return Err(StoreError::UnknownTask(task_id.clone()));
                }
                let key = (campaign_id.clone(), task_id.clone(), annotator_id.clone());
                if self.recorded.contains(&key) {
                    return Err(StoreError::DuplicateRecord {
                        campaign: key.0,
                        task: key.1,
                        annotator: key.2,
                    });
                }
                let h = self.hierarchy_of(c)?;
                let session = start_session_at(
                    h,
                    session_id.clone(),
                    task_id.clone(),
                    c.spec.traversal,
                    *at_ms,
                )?;
                let mut entry = SessionEntry {
                    campaign_id: campaign_id.clone(),
                    annotator_id: annotator_id.clone(),
                    session,
                    record_id: None,
                };
                // The root can be auto-accepted into a single-node tree.
                let record = self.record_for(&entry)?;
                entry.record_id = record.as_ref().map(|r| r.record_id.clone());
                if let Some(r) = &record {
                    self.check_new_record(r)?;
                }
                Ok(Effect::Session(session_id.clone(), entry))
            }
            Event::AnswerSubmitted {
                session_id,
                answer,
                at_ms,
            } => {
                let entry = self
                    .sessions
                    .get(session_id)
                    .ok_or_else(|| StoreError::UnknownSession(session_id.clone()))?;
                let c = self.campaign(&entry.campaign_id)?;
                Self::expect_status(c, CampaignStatus::Open)?;
                let h = self.hierarchy_of(c)?;
                let mut next = entry.clone();
                submit_answer_at(h, &mut next.session, *answer, *at_ms)?;
                let record = self.record_for(&next)?;
                if let Some(r) = &record {
                    self.check_new_record(r)?;
                }
                Ok(Effect::Answer(session_id.clone(), next.session, record))
            }
            Event::RecordCommitted { record } => {
                let c = self.campaign(&record.campaign_id)?;
                Self::expect_status(c, CampaignStatus::Open)?;
                if c.task(&record.task_id).is_none() {
                    return Err(StoreError::UnknownTask(record.task_id.clone()));
                }
                if record.annotator_id.is_empty() {
                    return Err(StoreError::Invalid("empty annotator_id".into()));
                }
                let h = self.hierarchy_of(c)?;
                if let Some(id) = &record.result.node_id {
                    h.node(id)?;
                }
                if !record.answer_log.is_empty() {
                    let replayed = replay_session(
                        h,
                        &record.record_id,
                        &record.task_id,
                        c.spec.traversal,
                        record.started_at,
                        &record.answer_log,
                    )?;
                    if replayed.result.as_ref() != Some(&record.result) {
                        return Err(StoreError::Invalid(format!(
                            "answer log of `{}` does not lead to its result",
                            record.record_id
                        )));
                    }
                }
                self.check_new_record(record)?;
                Ok(Effect::Record(record.clone()))
            }
        }
    }

    fn record_for(&self, entry: &SessionEntry) -> Result<Option<AnnotationRecord>, StoreError> {
        if !entry.session.is_terminal() {
            return Ok(None);
        }
        Ok(AnnotationRecord::from_session(
            self.next_record_id(),
            entry.campaign_id.clone(),
            entry.annotator_id.clone(),
            &entry.session,
        ))
    }

    fn insert_record(&mut self, r: AnnotationRecord) {
        self.recorded.insert((
            r.campaign_id.clone(),
            r.task_id.clone(),
            r.annotator_id.clone(),
        ));
        self.records.insert(r.record_id.clone(), r);
    }

    fn commit(&mut self, effect: Effect) {
        match effect {
            Effect::None => {}
            Effect::Hierarchy(h) => {
                self.hierarchies.insert(h.version().to_owned(), h);
            }
            Effect::Campaign(c) => {
                self.campaigns.insert(c.id().to_owned(), c);
            }
            Effect::Open(id, tasks) => {
                let c = self.campaigns.get_mut(&id).expect("planned");
                c.tasks = tasks;
                c.status = CampaignStatus::Open;
            }
            Effect::Close(id) => {
                self.campaigns.get_mut(&id).expect("planned").status = CampaignStatus::Closed;
            }
            Effect::Gold(id, golds) => {
                self.golds.insert(id, golds);
            }
            Effect::Session(id, entry) => {
                if entry.session.is_terminal() {
                    let record = self.record_for(&entry).expect("planned").expect("terminal");
                    self.insert_record(record);
                }
                self.sessions.insert(id, entry);
            }
            Effect::Answer(id, session, record) => {
                let entry = self.sessions.get_mut(&id).expect("planned");
                entry.session = session;
                if let Some(r) = record {
                    entry.record_id = Some(r.record_id.clone());
                    self.insert_record(r);
                }
            }
            Effect::Record(r) => self.insert_record(r),
        }
    }

    fn apply(&mut self, ev: &Event) -> Result<(), StoreError> {
        let effect = self.plan(ev)?;
        self.commit(effect);
        Ok(())
    }
}

/// Campaign state plus the journal that makes it durable. A store built
/// with [`CampaignStore::in_memory`] skips the journal.
#[derive(Debug)]
pub struct CampaignStore {
    state: State,
    journal: Option<Journal>,
    events: u64,
}

impl std::fmt::Debug for State {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("State")
            .field("campaigns", &self.campaigns.len())
            .field("sessions", &self.sessions.len())
            .field("records", &self.records.len())
            .finish()
    }
}

impl CampaignStore {
    pub fn in_memory() -> Self {
        CampaignStore {
            state: State::default(),
            journal: None,
            events: 0,
        }
    }

    /// Opens the journal under `data_dir` (creating both if needed) and
    /// replays it. A journal event that no longer validates is reported as
    /// corruption at its line.
    pub fn open(data_dir: impl AsRef<Path>) -> Result<Self, StoreError> {
        let dir = data_dir.as_ref();
        std::fs::create_dir_all(dir)
            .map_err(|e| StoreError::Io(format!("{}: {e}", dir.display())))?;
        let (journal, entries) = Journal::open(dir.join("journal.jsonl"))?;
        let mut state = State::default();
        for (i, entry) in entries.iter().enumerate() {
            state
                .apply(&entry.event)
                .map_err(|e| StoreError::CorruptJournal {
                    line: i + 1,
                    message: e.to_string(),
                })?;
        }
        Ok(CampaignStore {
            state,
            journal: Some(journal),
            events: entries.len() as u64,
        })
    }

    /// Rebuilds state from a list of events without touching disk.
    pub fn replay(events: &[Event]) -> Result<Self, StoreError> {
        let mut store = Self::in_memory();
        for ev in events {
            store.state.apply(ev)?;
            store.events += 1;
        }
        Ok(store)
    }

    fn emit(&mut self, ev: Event) -> Result<(), StoreError> {
        let effect = self.state.plan(&ev)?;
        if let Some(j) = &mut self.journal {
            j.append(&ev)?;
        }
        self.state.commit(effect);
        self.events += 1;
        Ok(())
    }

    /// Number of events applied so far.
    pub fn event_count(&self) -> u64 {
        self.events
    }

    pub fn flush(&mut self) -> Result<(), StoreError> {
        match &mut self.journal {
            Some(j) => j.sync(),
            None => Ok(()),
        }
    }

    /// Registers a hierarchy by content. Registering the same content twice
    /// is a no-op. Returns the version.
    pub fn register_hierarchy(&mut self, h: &Hierarchy) -> Result<String, StoreError> {
        let version = h.version().to_owned();
        if !self.state.hierarchies.contains_key(&version) {
            self.emit(Event::HierarchyRegistered {
                version: version.clone(),
                document: h.to_document(),
            })?;
        }
        Ok(version)
    }

    pub fn hierarchy(&self, version: &str) -> Result<&Hierarchy, StoreError> {
        self.state
            .hierarchies
            .get(version)
            .ok_or_else(|| StoreError::UnknownHierarchy(version.to_owned()))
    }

    pub fn hierarchy_versions(&self) -> impl Iterator<Item = &str> {
        self.state.hierarchies.keys().map(String::as_str)
    }

    /// Creates a draft campaign. Returns it with any warnings (currently
    /// only the empty-dataset one).
    pub fn create_campaign(
        &mut self,
        spec: CampaignSpec,
    ) -> Result<(Campaign, Vec<String>), StoreError> {
        let mut warnings = Vec::new();
        if spec.images.is_empty() {
            warnings.push(format!(
                "campaign `{}` has an empty dataset",
                spec.campaign_id
            ));
        }
        let id = spec.campaign_id.clone();
        self.emit(Event::CampaignCreated {
            spec,
            at_ms: now_ms(),
        })?;
        Ok((self.campaign(&id)?.clone(), warnings))
    }

    pub fn campaign(&self, id: &str) -> Result<&Campaign, StoreError> {
        self.state.campaign(id)
    }

    pub fn campaigns(&self) -> impl Iterator<Item = &Campaign> {
        self.state.campaigns.values()
    }

    /// Materializes the task list and opens the campaign.
    pub fn open_campaign(&mut self, id: &str) -> Result<&Campaign, StoreError> {
        let c = self.state.campaign(id)?;
        State::expect_status(c, CampaignStatus::Draft)?;
        let tasks = expand_dataset(&c.spec.images, c.spec.strategy)?;
        self.emit(Event::CampaignOpened {
            campaign_id: id.to_owned(),
            tasks,
            at_ms: now_ms(),
        })?;
        self.campaign(id)
    }

    pub fn close_campaign(&mut self, id: &str) -> Result<&Campaign, StoreError> {
        self.emit(Event::CampaignClosed {
            campaign_id: id.to_owned(),
            at_ms: now_ms(),
        })?;
        self.campaign(id)
    }

    /// Replaces the campaign's gold labels.
    pub fn load_gold(&mut self, id: &str, golds: Vec<GoldAssignment>) -> Result<(), StoreError> {
        self.emit(Event::GoldLoaded {
            campaign_id: id.to_owned(),
            golds,
        })
    }

    pub fn gold(&self, id: &str) -> Option<&[GoldAssignment]> {
        self.state.golds.get(id).map(Vec::as_slice)
    }

    pub fn assignment(
        &self,
        campaign_id: &str,
        annotator_id: &str,
    ) -> Result<Assignment, StoreError> {
        let c = self.campaign(campaign_id)?;
        let task_ids: Vec<String> = c.tasks.iter().map(|t| t.task_id.clone()).collect();
        let cursor = task_ids
            .iter()
            .position(|t| !self.has_record(campaign_id, t, annotator_id))
            .unwrap_or(task_ids.len());
        Ok(Assignment {
            annotator_id: annotator_id.to_owned(),
            task_ids,
            cursor,
        })
    }

    fn has_record(&self, campaign: &str, task: &str, annotator: &str) -> bool {
        self.state
            .recorded
            .contains(&(campaign.to_owned(), task.to_owned(), annotator.to_owned()))
    }

    fn open_session_for(
        &self,
        campaign: &str,
        task: &str,
        annotator: &str,
    ) -> Option<&SessionEntry> {
        self.state.sessions.values().find(|e| {
            e.campaign_id == campaign
                && e.annotator_id == annotator
                && e.session.task_id == task
                && !e.session.is_terminal()
        })
    }

    /// The annotator's next unrecorded task, or `None` when they are done.
    pub fn next_task(
        &self,
        campaign_id: &str,
        annotator_id: &str,
    ) -> Result<Option<NextTask>, StoreError> {
        let c = self.campaign(campaign_id)?;
        State::expect_status(c, CampaignStatus::Open)?;
        let a = self.assignment(campaign_id, annotator_id)?;
        Ok(c.tasks.get(a.cursor).map(|task| NextTask {
            campaign_id: campaign_id.to_owned(),
            task: task.clone(),
            position: a.cursor,
            total: a.task_ids.len(),
            open_session: self
                .open_session_for(campaign_id, &task.task_id, annotator_id)
                .map(|e| e.session.session_id.clone()),
        }))
    }

    /// Finds the open campaign owning `task_id` when the caller did not say.
    pub fn resolve_campaign(
        &self,
        campaign_id: Option<&str>,
        task_id: &str,
    ) -> Result<String, StoreError> {
        if let Some(id) = campaign_id {
            return Ok(self.campaign(id)?.id().to_owned());
        }
        let owners: Vec<&Campaign> = self
            .state
            .campaigns
            .values()
            .filter(|c| c.status == CampaignStatus::Open && c.task(task_id).is_some())
            .collect();
        match owners.as_slice() {
            [] => Err(StoreError::UnknownTask(task_id.to_owned())),
            [c] => Ok(c.id().to_owned()),
            _ => Err(StoreError::AmbiguousTask(task_id.to_owned())),
        }
    }

    /// Starts a session, or returns the annotator's unfinished one on the
    /// same task.
    pub fn start_session(
        &mut self,
        campaign_id: &str,
        task_id: &str,
        annotator_id: &str,
    ) -> Result<&SessionEntry, StoreError> {
        if let Some(e) = self.open_session_for(campaign_id, task_id, annotator_id) {
            let id = e.session.session_id.clone();
            return self.session(&id);
        }
        let session_id = self.state.next_session_id();
        self.emit(Event::SessionStarted {
            session_id: session_id.clone(),
            campaign_id: campaign_id.to_owned(),
            task_id: task_id.to_owned(),
            annotator_id: annotator_id.to_owned(),
            at_ms: now_ms(),
        })?;
        self.session(&session_id)
    }

    pub fn session(&self, id: &str) -> Result<&SessionEntry, StoreError> {
        self.state
            .sessions
            .get(id)
            .ok_or_else(|| StoreError::UnknownSession(id.to_owned()))
    }

    pub fn question(&self, session_id: &str) -> Result<Prompt, StoreError> {
        let e = self.session(session_id)?;
        let h = self.state.hierarchy_of(self.campaign(&e.campaign_id)?)?;
        Ok(current_question(h, &e.session)?)
    }

    /// Applies an answer. A session that becomes terminal is recorded in
    /// the same step.
    pub fn submit_answer(
        &mut self,
        session_id: &str,
        answer: AskAnswer,
    ) -> Result<&SessionEntry, StoreError> {
        self.submit_answer_at(session_id, answer, now_ms())
    }

    pub fn submit_answer_at(
        &mut self,
        session_id: &str,
        answer: AskAnswer,
        at_ms: i64,
    ) -> Result<&SessionEntry, StoreError> {
        self.emit(Event::AnswerSubmitted {
            session_id: session_id.to_owned(),
            answer,
            at_ms,
        })?;
        self.session(session_id)
    }

    /// Stores the result of a session run outside the service. Its answer
    /// log is replayed through the campaign's hierarchy before acceptance.
    pub fn record_annotation(
        &mut self,
        campaign_id: &str,
        annotator_id: &str,
        session: &ClassificationSession,
    ) -> Result<&AnnotationRecord, StoreError> {
        let c = self.campaign(campaign_id)?;
        State::expect_status(c, CampaignStatus::Open)?;
        if session.hierarchy_version != c.spec.hierarchy_version {
            return Err(crate::traversal::TraversalError::VersionMismatch {
                expected: c.spec.hierarchy_version.clone(),
                found: session.hierarchy_version.clone(),
            }
            .into());
        }
        let record_id = self.state.next_record_id();
        let record = AnnotationRecord::from_session(&record_id, campaign_id, annotator_id, session)
            .ok_or_else(|| StoreError::NotTerminal(session.session_id.clone()))?;
        self.emit(Event::RecordCommitted { record })?;
        Ok(&self.state.records[&record_id])
    }

    pub fn records(&self, campaign_id: &str) -> Vec<&AnnotationRecord> {
        self.state
            .records
            .values()
            .filter(|r| r.campaign_id == campaign_id)
            .collect()
    }

    pub fn campaign_stats(&self, campaign_id: &str) -> Result<CampaignStats, StoreError> {
        let c = self.campaign(campaign_id)?;
        let h = self.state.hierarchy_of(c)?;
        let records: Vec<AnnotationRecord> =
            self.records(campaign_id).into_iter().cloned().collect();
        if records.is_empty() {
            return Err(StoreError::EmptyCampaign(campaign_id.to_owned()));
        }
        let annotators: BTreeSet<&str> = records.iter().map(|r| r.annotator_id.as_str()).collect();
        let progress = annotators
            .iter()
            .map(|a| Progress {
                annotator_id: (*a).to_owned(),
                done: records.iter().filter(|r| r.annotator_id == *a).count(),
                total: c.tasks.len(),
            })
            .collect();
        let agreement = build_reliability(&records)
            .ok()
            .and_then(|m| agreement_report_with(&m, Some(h), AlphaOptions::default()).ok());
        let audit = match self.state.golds.get(campaign_id) {
            Some(golds) => {
                let gold_tasks: BTreeSet<&str> = golds.iter().map(|g| g.task_id.as_str()).collect();
                let labels: Vec<_> = records
                    .iter()
                    .filter(|r| gold_tasks.contains(r.task_id.as_str()))
                    .map(|r| (r.task_id.clone(), r.result.clone()))
                    .collect();
                Some(audit_report(h, &labels, golds)?)
            }
            None => None,
        };
        Ok(CampaignStats {
            campaign_id: campaign_id.to_owned(),
            status: c.status,
            tasks: c.tasks.len(),
            records: records.len(),
            progress,
            agreement,
            timing: timing_stats(&records),
            audit,
            discharged: records.iter().filter(|r| r.result.is_discharged()).count(),
            stopped_on_unsure: records
                .iter()
                .filter(|r| stopped_on_unsure(&r.result, &r.answer_log))
                .count(),
            open_sessions: self
                .state
                .sessions
                .values()
                .filter(|e| e.campaign_id == campaign_id && !e.session.is_terminal())
                .count(),
        })
    }

    /// Training manifest of a closed campaign: one line per task, labelled
    /// with the plurality label (ties go to the label that comes first in
    /// hierarchy order). With a seed, labelled tasks get an 80/20 split
    /// stratified by label.
    pub fn export_dataset(
        &self,
        campaign_id: &str,
        scheme: Option<LabelingScheme>,
        split_seed: Option<u64>,
    ) -> Result<Vec<ExportLine>, StoreError> {
        let c = self.campaign(campaign_id)?;
        State::expect_status(c, CampaignStatus::Closed)?;
        let h = self.state.hierarchy_of(c)?;
        let scheme = scheme.unwrap_or(c.spec.labeling_scheme);
        let rank = |id: &str| h.document_position(id).unwrap_or(usize::MAX);

        let mut votes: BTreeMap<&str, BTreeMap<&str, (usize, &AnnotationRecord)>> = BTreeMap::new();
        for r in self
            .state
            .records
            .values()
            .filter(|r| r.campaign_id == campaign_id)
        {
            votes
                .entry(r.task_id.as_str())
                .or_default()
                .entry(r.result.category_id())
                .or_insert((0, r))
                .0 += 1;
        }

        let mut lines: Vec<ExportLine> = c
            .tasks
            .iter()
            .map(|t| {
                let image = c.image(&t.image_id).expect("tasks come from the dataset");
                let winner = votes.get(t.task_id.as_str()).and_then(|v| {
                    v.iter()
                        .min_by_key(|(cat, (n, _))| (std::cmp::Reverse(*n), rank(cat)))
                        .map(|(_, (n, r))| (*n, &r.result))
                });
                let polygon = t.region_id.as_ref().and_then(|rid| {
                    image
                        .regions
                        .iter()
                        .find(|r| &r.region_id == rid)
                        .map(|r| r.polygon.clone())
                });
                ExportLine {
                    task_id: t.task_id.clone(),
                    image_uri: image.uri.clone(),
                    crop: t.crop,
                    region_id: t.region_id.clone(),
                    polygon: if t.crop.is_some() { None } else { polygon },
                    label: winner.map(|(_, l)| l.label(scheme).to_owned()),
                    category_id: winner.map(|(_, l)| l.category_id().to_owned()),
                    votes: winner.map_or(0, |(n, _)| n),
                    split: None,
                }
            })
            .collect();

        if let Some(s) = split_seed {
            let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
            for (i, l) in lines.iter().enumerate() {
                if let Some(cat) = &l.category_id {
                    strata.entry(cat.clone()).or_default().push(i);
                }
            }
            for (cat, mut idx) in strata {
                let mut rng = seed::rng(seed::derive_str(s, &cat));
                idx.shuffle(&mut rng);
                let n_train = (idx.len() as f64 * 0.8).round() as usize;
                for (k, i) in idx.into_iter().enumerate() {
                    lines[i].split = Some(if k < n_train {
                        Split::Train
                    } else {
                        Split::Test
                    });
                }
            }
        }
        Ok(lines)
    }

    /// SHA-256 over a canonical serialization of the whole state.
    pub fn digest(&self) -> String {
        let snap = Snapshot {
            hierarchies: self
                .state
                .hierarchies
                .iter()
                .map(|(v, h)| (v.as_str(), h.to_document()))
                .collect(),
            campaigns: &self.state.campaigns,
            golds: &self.state.golds,
            sessions: &self.state.sessions,
            records: &self.state.records,
        };
        let bytes = serde_json::to_vec(&snap).expect("state serializes");
        hex::encode(Sha256::digest(&bytes))
    }
}

/// Renders export lines as JSON lines.
pub fn export_jsonl(lines: &[ExportLine]) -> String {
    let mut out = String::new();
    for l in lines {
        out.push_str(&serde_json::to_string(l).expect("export line serializes"));
        out.push('\n');
    }
    out
}
