//! Command-line front end. Document results go to stdout as JSON;
//! conversational output and errors go to stderr.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use ace_core::analyzer::AnalysisMode;
use ace_core::annotation::Span;
use ace_core::elicitation::ElicitationStatus;
use ace_core::history::Origin;
use ace_core::refinement::{RefinedPromptDraft, SuggestionLists};
use ace_core::scenario::span_for_quote;
use ace_core::{AceError, Engine};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::{FileConfig, Overrides, Settings};
use crate::error::CliError;
use crate::ops::{self, CommitRequest};

#[derive(Debug, Parser)]
#[command(name = "ace", version, about = "Conversation design loop for social robots")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Store directory.
    #[arg(long, global = true, env = "ACE_STORE_PATH")]
    pub store: Option<PathBuf>,
    /// Recorded completions directory.
    #[arg(long, global = true, env = "ACE_FIXTURES_DIR")]
    pub fixtures: Option<PathBuf>,
    /// LLM mode: live, record or replay.
    #[arg(long, global = true, env = "ACE_LLM_MODE")]
    pub mode: Option<String>,
    #[arg(long, global = true, env = "ACE_LLM_BASE_URL")]
    pub base_url: Option<String>,
    #[arg(long, global = true, env = "ACE_LLM_MODEL")]
    pub model: Option<String>,
    #[arg(long, global = true, env = "ACE_LLM_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    /// RFC 3339 instant used for every timestamp.
    #[arg(long, global = true, env = "ACE_FIXED_CLOCK")]
    pub fixed_clock: Option<String>,
    /// Config file (defaults to ./ace.toml when present).
    #[arg(long, global = true, env = "ACE_CONFIG")]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a project.
    Init {
        #[arg(long)]
        name: String,
        #[arg(long, default_value = "")]
        brief: String,
    },
    /// List projects or show one.
    Project {
        #[command(subcommand)]
        action: ProjectAction,
    },
    /// Scaffolded elicitation of an initial prompt.
    Elicit {
        #[command(subcommand)]
        action: ElicitAction,
    },
    /// Test sessions against a prompt version.
    Chat {
        #[command(subcommand)]
        action: ChatAction,
    },
    /// Show a transcript.
    Transcript { transcript_id: String },
    /// Annotate a span of a sealed transcript.
    Annotate {
        transcript_id: String,
        #[arg(long)]
        utterance: usize,
        /// Exact text to annotate inside the utterance.
        #[arg(long, conflicts_with_all = ["start", "end"])]
        quote: Option<String>,
        #[arg(long, requires = "end")]
        start: Option<usize>,
        #[arg(long, requires = "start")]
        end: Option<usize>,
        #[arg(long = "tag", required = true)]
        tags: Vec<String>,
        #[arg(long)]
        comment: Option<String>,
    },
    /// List the annotations of a transcript.
    Annotations { transcript_id: String },
    /// Conflicting annotations on a transcript.
    Conflicts { transcript_id: String },
    /// Feedback digest of a transcript.
    Digest {
        transcript_id: String,
        #[arg(long)]
        json: bool,
    },
    /// Generate refinement suggestions from an annotated transcript.
    Suggest {
        #[arg(long)]
        version: String,
        #[arg(long)]
        transcript: String,
    },
    /// Show or edit a suggestion set.
    Suggestions {
        #[command(subcommand)]
        action: SuggestionsAction,
    },
    /// Produce a refined prompt draft.
    Refine {
        #[arg(long)]
        version: String,
        #[arg(long)]
        suggestions: String,
        /// JSON file with designer-edited suggestion lists.
        #[arg(long)]
        edited: Option<PathBuf>,
        /// Also write the draft to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Commit a prompt version from a body file or a refinement draft.
    Commit(CommitArgs),
    /// Measure prompt quality.
    Analyze {
        #[arg(long, conflicts_with_all = ["text", "version"])]
        file: Option<PathBuf>,
        #[arg(long, conflicts_with = "version")]
        text: Option<String>,
        #[arg(long)]
        version: Option<String>,
        #[arg(long = "analysis", default_value = "heuristic")]
        analysis: String,
        #[arg(long)]
        json: bool,
    },
    /// Browse prompt history.
    History {
        #[command(subcommand)]
        action: HistoryAction,
    },
    /// Create a new version carrying an earlier version's body.
    Revert { version_id: String },
    /// Line diff between two versions.
    Diff {
        a: String,
        b: String,
        #[arg(long)]
        json: bool,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "ACE_BIND_ADDR")]
        bind: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ProjectAction {
    List,
    Show { project_id: String },
}

#[derive(Debug, Subcommand)]
pub enum ElicitAction {
    /// Start a session and print the greeting.
    Start {
        #[arg(long)]
        project: String,
    },
    Show {
        session_id: String,
    },
    /// Send one designer message.
    Send {
        session_id: String,
        #[arg(long)]
        message: String,
    },
    /// Draft the initial prompt.
    Finalize {
        session_id: String,
        /// Commit the draft as an elicited version.
        #[arg(long)]
        commit: bool,
    },
    Abandon {
        session_id: String,
    },
    /// Interactive chat on stdin; drafts when the designer is done or input ends.
    Run {
        #[arg(long)]
        project: String,
        #[arg(long)]
        commit: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum ChatAction {
    Start {
        #[arg(long)]
        version: String,
    },
    Show {
        session_id: String,
    },
    Send {
        session_id: String,
        #[arg(long)]
        message: String,
    },
    End {
        session_id: String,
    },
    /// Interactive session on stdin; `/end` or end of input seals the transcript.
    Run {
        #[arg(long)]
        version: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum SuggestionsAction {
    Show {
        suggestion_set_id: String,
    },
    Edit {
        suggestion_set_id: String,
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CommitArgs {
    #[arg(long, required_unless_present = "draft")]
    pub project: Option<String>,
    /// File holding the prompt body.
    #[arg(long, conflicts_with_all = ["body", "draft"])]
    pub file: Option<PathBuf>,
    #[arg(long, conflicts_with = "draft")]
    pub body: Option<String>,
    #[arg(long, conflicts_with = "draft")]
    pub parent: Option<String>,
    #[arg(long, conflicts_with = "draft")]
    pub origin: Option<String>,
    /// Refinement draft JSON written by `refine --out`.
    #[arg(long)]
    pub draft: Option<PathBuf>,
    /// File with a designer-edited body replacing the draft text.
    #[arg(long, requires = "draft")]
    pub edited_body: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum HistoryAction {
    Versions { project_id: String },
    Show { version_id: String },
    Lineage { version_id: String },
    Cycles { project_id: String },
}

/// Input and output streams for one invocation.
pub struct Io<'a> {
    pub stdin: &'a mut dyn BufRead,
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Parses `argv`, runs the command and returns the exit code.
pub fn run<I, T>(argv: I, io: &mut Io<'_>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    let _ = write!(io.stdout, "{}", e.render());
                    0
                }
                _ => {
                    let _ = write!(io.stderr, "{}", e.render());
                    2
                }
            };
        }
    };
    match execute(cli, io) {
        Ok(()) | Err(CliError::Closed) => 0,
        Err(e) => {
            let _ = writeln!(io.stderr, "error[{}]: {e}", e.code());
            e.exit_code()
        }
    }
}

fn overrides(g: &GlobalArgs, bind: Option<String>) -> Overrides {
    Overrides {
        store_path: g.store.clone(),
        bind_addr: bind,
        fixtures_dir: g.fixtures.clone(),
        llm_mode: g.mode.clone(),
        llm_base_url: g.base_url.clone(),
        llm_model: g.model.clone(),
        llm_api_key: g.api_key.clone(),
        fixed_clock: g.fixed_clock.clone(),
    }
}

fn emit<T: Serialize>(out: &mut dyn Write, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    Ok(writeln!(out, "{text}")?)
}

fn say(err: &mut dyn Write, who: &str, text: &str) -> Result<(), CliError> {
    Ok(writeln!(err, "{who}> {text}")?)
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    serde_json::from_str(&read_file(path)?)
        .map_err(|e| CliError::Domain(AceError::InvalidInput(format!("{}: {e}", path.display()))))
}

fn parse_mode(s: &str) -> Result<AnalysisMode, CliError> {
    s.parse().map_err(CliError::Usage)
}

fn execute(cli: Cli, io: &mut Io<'_>) -> Result<(), CliError> {
    let file = FileConfig::load(cli.global.config.as_deref())?;
    let bind = match &cli.command {
        Command::Serve { bind } => bind.clone(),
        _ => None,
    };
    let settings = Settings::resolve(overrides(&cli.global, bind), file)?;
    let engine = settings.engine()?;
    if let Command::Serve { .. } = cli.command {
        return crate::api::serve(engine, &settings.bind_addr);
    }
    dispatch(&engine, cli.command, io)
}

/// Runs one command against an engine.
pub fn dispatch(engine: &Engine, command: Command, io: &mut Io<'_>) -> Result<(), CliError> {
    let out = &mut *io.stdout;
    match command {
        Command::Init { name, brief } => emit(out, &engine.create_project(&name, &brief)?),
        Command::Project { action } => match action {
            ProjectAction::List => emit(out, &engine.projects()?),
            ProjectAction::Show { project_id } => emit(out, &engine.project(&project_id)?),
        },
        Command::Elicit { action } => elicit(engine, action, io),
        Command::Chat { action } => chat(engine, action, io),
        Command::Transcript { transcript_id } => emit(out, &engine.transcript(&transcript_id)?),
        Command::Annotate { transcript_id, utterance, quote, start, end, tags, comment } => {
            let span = match (quote, start, end) {
                (Some(q), _, _) => {
                    let transcript = engine.transcript(&transcript_id)?;
                    span_for_quote(&transcript, utterance, &q).ok_or_else(|| {
                        CliError::Domain(AceError::Annotation(ace_core::annotation::AnnotationError::InvalidSpan(
                            format!("{q:?} does not occur in utterance {utterance}"),
                        )))
                    })?
                }
                (None, Some(s), Some(e)) => Span::new(utterance, s, e),
                _ => return Err(CliError::Usage("annotate needs --quote or --start and --end".into())),
            };
            emit(out, &engine.add_annotation(&transcript_id, span, &tags, comment)?)
        }
        Command::Annotations { transcript_id } => emit(out, &engine.annotations(&transcript_id)?),
        Command::Conflicts { transcript_id } => emit(out, &engine.conflicts(&transcript_id)?),
        Command::Digest { transcript_id, json } => {
            let view = ops::digest(engine, &transcript_id)?;
            if json {
                emit(out, &view)
            } else {
                Ok(write!(out, "{}", view.digest)?)
            }
        }
        Command::Suggest { version, transcript } => emit(out, &engine.generate_suggestions(&version, &transcript)?),
        Command::Suggestions { action } => match action {
            SuggestionsAction::Show { suggestion_set_id } => emit(out, &engine.suggestion_set(&suggestion_set_id)?),
            SuggestionsAction::Edit { suggestion_set_id, file } => {
                let lists: SuggestionLists = read_json(&file)?;
                emit(out, &engine.edit_suggestions(&suggestion_set_id, lists)?)
            }
        },
        Command::Refine { version, suggestions, edited, out: out_file } => {
            let edited = edited.as_deref().map(read_json::<SuggestionLists>).transpose()?;
            let draft = engine.refine(&version, &suggestions, edited)?;
            if let Some(path) = out_file {
                let text = serde_json::to_string_pretty(&draft).map_err(|e| CliError::Io(e.to_string()))?;
                std::fs::write(&path, text + "\n")
                    .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
            }
            emit(out, &draft)
        }
        Command::Commit(args) => emit(out, &commit(engine, args)?),
        Command::Analyze { file, text, version, analysis, json } => {
            let mode = parse_mode(&analysis)?;
            let report = match (file, text, version) {
                (Some(f), None, None) => engine.analyze_text(&read_file(&f)?, mode)?,
                (None, Some(t), None) => engine.analyze_text(&t, mode)?,
                (None, None, Some(v)) => engine.analyze_version(&v, mode)?,
                _ => return Err(CliError::Usage("analyze needs one of --file, --text or --version".into())),
            };
            if json {
                emit(out, &report)
            } else {
                Ok(write!(out, "{}", report.render_text())?)
            }
        }
        Command::History { action } => match action {
            HistoryAction::Versions { project_id } => emit(out, &engine.versions(&project_id)?),
            HistoryAction::Show { version_id } => emit(out, &engine.version(&version_id)?),
            HistoryAction::Lineage { version_id } => emit(out, &engine.lineage(&version_id)?),
            HistoryAction::Cycles { project_id } => emit(out, &engine.design_cycles(&project_id)?),
        },
        Command::Revert { version_id } => emit(out, &engine.revert(&version_id)?),
        Command::Diff { a, b, json } => {
            let view = ops::diff(engine, &a, &b)?;
            if json {
                emit(out, &view)
            } else {
                Ok(write!(out, "{}", view.unified)?)
            }
        }
        Command::Serve { .. } => Err(CliError::Usage("serve is handled before dispatch".into())),
    }
}

fn commit(engine: &Engine, args: CommitArgs) -> Result<ace_core::history::PromptVersion, CliError> {
    if let Some(path) = args.draft {
        let draft: RefinedPromptDraft = read_json(&path)?;
        let project_id = match args.project {
            Some(p) => p,
            None => engine.version(&draft.based_on_version_id)?.project_id,
        };
        let edited_body = args.edited_body.as_deref().map(read_file).transpose()?;
        let req = CommitRequest { draft: Some(draft), edited_body, ..Default::default() };
        return Ok(ops::commit(engine, &project_id, req)?);
    }
    let project_id = args.project.ok_or_else(|| CliError::Usage("--project is required".into()))?;
    let body = match (args.file, args.body) {
        (Some(f), None) => read_file(&f)?,
        (None, Some(b)) => b,
        _ => return Err(CliError::Usage("commit needs --file, --body or --draft".into())),
    };
    let origin = args.origin.map(|o| o.parse::<Origin>()).transpose().map_err(CliError::Usage)?;
    let req = CommitRequest { body: Some(body), origin, parent_id: args.parent, ..Default::default() };
    Ok(ops::commit(engine, &project_id, req)?)
}

fn commit_elicited(
    engine: &Engine,
    draft: &ace_core::engine::ElicitationDraft,
) -> Result<ace_core::history::PromptVersion, CliError> {
    let req = CommitRequest { body: Some(draft.body.clone()), origin: Some(Origin::Elicited), ..Default::default() };
    Ok(ops::commit(engine, &draft.project_id, req)?)
}

fn elicit(engine: &Engine, action: ElicitAction, io: &mut Io<'_>) -> Result<(), CliError> {
    match action {
        ElicitAction::Start { project } => emit(io.stdout, &engine.start_elicitation(&project)?),
        ElicitAction::Show { session_id } => emit(io.stdout, &engine.elicitation(&session_id)?),
        ElicitAction::Send { session_id, message } => {
            emit(io.stdout, &engine.elicitation_message(&session_id, &message)?)
        }
        ElicitAction::Finalize { session_id, commit } => {
            let draft = engine.finalize_elicitation(&session_id)?;
            if commit {
                emit(io.stdout, &commit_elicited(engine, &draft)?)
            } else {
                emit(io.stdout, &draft)
            }
        }
        ElicitAction::Abandon { session_id } => emit(io.stdout, &engine.abandon_elicitation(&session_id)?),
        ElicitAction::Run { project, commit } => {
            let session = engine.start_elicitation(&project)?;
            if let Some(greeting) = session.turns.first() {
                say(io.stderr, "agent", &greeting.text)?;
            }
            let mut line = String::new();
            loop {
                line.clear();
                let n = io.stdin.read_line(&mut line)?;
                if n == 0 {
                    break;
                }
                let response = engine.elicitation_message(&session.id, line.trim_end_matches(['\r', '\n']))?;
                say(io.stderr, "agent", &response.reply)?;
                if response.status != ElicitationStatus::Active {
                    break;
                }
            }
            let draft = engine.finalize_elicitation(&session.id)?;
            if commit {
                emit(io.stdout, &commit_elicited(engine, &draft)?)
            } else {
                emit(io.stdout, &draft)
            }
        }
    }
}

fn chat(engine: &Engine, action: ChatAction, io: &mut Io<'_>) -> Result<(), CliError> {
    match action {
        ChatAction::Start { version } => {
            let project = engine.version(&version)?.project_id;
            emit(io.stdout, &ops::start_session(engine, &project, &version)?)
        }
        ChatAction::Show { session_id } => emit(io.stdout, &engine.session(&session_id)?),
        ChatAction::Send { session_id, message } => emit(io.stdout, &engine.user_turn(&session_id, &message)?),
        ChatAction::End { session_id } => emit(io.stdout, &engine.end_session(&session_id)?),
        ChatAction::Run { version } => {
            let project = engine.version(&version)?.project_id;
            let view = ops::start_session(engine, &project, &version)?;
            if let Some(greeting) = view.transcript.utterances.first() {
                say(io.stderr, "robot", &greeting.text)?;
            }
            let mut line = String::new();
            loop {
                line.clear();
                let n = io.stdin.read_line(&mut line)?;
                let text = line.trim();
                if n == 0 || text == "/end" {
                    break;
                }
                if text.is_empty() {
                    continue;
                }
                let outcome = engine.user_turn(&view.session.id, text)?;
                say(io.stderr, "robot", &outcome.utterance.text)?;
            }
            emit(io.stdout, &engine.end_session(&view.session.id)?)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn test_cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn test_unknown_subcommand_is_usage_error() {
        let mut stdin = std::io::empty();
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let mut io = Io { stdin: &mut stdin, stdout: &mut out, stderr: &mut err };
        assert_eq!(run(["ace", "frobnicate"], &mut io), 2);
        assert!(String::from_utf8(err).unwrap().contains("Usage"));
    }

    struct ClosedPipe;

    impl Write for ClosedPipe {
        fn write(&mut self, _: &[u8]) -> std::io::Result<usize> {
            Err(std::io::ErrorKind::BrokenPipe.into())
        }

        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn test_closed_stdout_exits_quietly() {
        let dir = tempfile::tempdir().unwrap();
        let store = dir.path().join("store");
        let mut stdin = std::io::empty();
        let (mut out, mut err) = (ClosedPipe, Vec::new());
        let mut io = Io { stdin: &mut stdin, stdout: &mut out, stderr: &mut err };
        let argv = ["ace", "--store", store.to_str().unwrap(), "analyze", "--text", "Be brief."];
        assert_eq!(run(argv, &mut io), 0);
        assert!(err.is_empty());
    }
}
