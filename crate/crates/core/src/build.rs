//! Graph construction over a repository snapshot.
//!
//! Two passes, mirroring how the graph is defined:
//!
//! 1. **Structural pass** — walks the source tree, emits Directory, Module,
//!    Class, Function, and Method nodes with Contains, Imports/ImportedBy,
//!    and Inherits edges, and records call sites for later resolution.
//!    Call resolution runs after every file has parsed, restricted to
//!    unambiguous cases: missing a call edge is preferred over inventing one.
//! 2. **Dataflow pass** — for every function body, emits one Statement node
//!    per top-level statement plus a synthetic signature pseudo-statement
//!    housing parameter definitions, then links statements with
//!    DataflowDefUse/DataflowUseDef edge pairs using the last preceding
//!    definition in textual source order.
//!
//! Coarse mode skips the dataflow pass entirely.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use crate::errors::{BuildError, GraphError};
use crate::frontend::{
    self, EntityDecl, EntityKind, ModuleSyntax, ParseDiagnostic, StatementFact, StatementForm,
};
use crate::graph::{
    BuildMode, DefRole, EdgeKind, EntityNode, GraphBuilder, NodeKind, RepoGraph, VarDef,
};

/// Everything the build wants to report besides the graph itself.
#[derive(Debug, Default)]
pub struct BuildDiagnostics {
    pub parse_errors: Vec<ParseDiagnostic>,
    /// Files skipped before parsing, with the reason (e.g. invalid UTF-8).
    pub skipped_files: Vec<(String, String)>,
    pub unresolved_calls: usize,
    pub unresolved_bases: usize,
    pub dropped_relative_imports: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug)]
pub struct BuildOutput {
    pub graph: RepoGraph,
    pub diagnostics: BuildDiagnostics,
}

/// Root directory node id; the Contains forest hangs off it.
pub const ROOT_DIRECTORY_ID: &str = "Directory:.:0";

/// Build the repository graph for the tree rooted at `repo_root`.
pub fn build_graph(
    repo_root: impl AsRef<Path>,
    mode: BuildMode,
) -> Result<BuildOutput, BuildError> {
    let repo_root = repo_root.as_ref();
    if !repo_root.is_dir() {
        return Err(BuildError::UnreadableRoot {
            path: repo_root.display().to_string(),
        });
    }
    let mut diagnostics = BuildDiagnostics::default();
    let files = collect_python_files(repo_root);
    let mut modules: Vec<ParsedModule> = Vec::new();
    for rel_path in files {
        let bytes = match std::fs::read(repo_root.join(&rel_path)) {
            Ok(bytes) => bytes,
            Err(err) => {
                diagnostics.skipped_files.push((rel_path, err.to_string()));
                continue;
            }
        };
        let text = match String::from_utf8(bytes) {
            Ok(text) => text,
            Err(_) => {
                diagnostics
                    .skipped_files
                    .push((rel_path, "invalid UTF-8".to_string()));
                continue;
            }
        };
        let syntax = frontend::parse_module(&rel_path, &text);
        diagnostics.dropped_relative_imports += syntax.dropped_relative_imports as usize;
        if let Some(diag) = &syntax.diagnostic {
            diagnostics.parse_errors.push(diag.clone());
        }
        modules.push(ParsedModule::new(syntax));
    }

    let mut builder = GraphBuilder::new(mode);
    builder.upsert_node(EntityNode::new(NodeKind::Directory, ".", ".", ".", 0, 0))?;
    if modules.is_empty() {
        diagnostics
            .warnings
            .push("no .py files found under the repository root".to_string());
        return Ok(BuildOutput {
            graph: builder.freeze(),
            diagnostics,
        });
    }

    emit_structure(&mut builder, &mut modules)?;
    let indexes = Indexes::collect(&modules);
    emit_imports(&mut builder, &modules, &indexes)?;
    diagnostics.unresolved_calls = resolve_calls(&mut builder, &modules, &indexes)?;
    diagnostics.unresolved_bases = resolve_inherits(&mut builder, &modules, &indexes)?;
    if mode == BuildMode::Full {
        run_dataflow_pass(&mut builder, &modules)?;
    }
    Ok(BuildOutput {
        graph: builder.freeze(),
        diagnostics,
    })
}

/// Repo-relative forward-slash paths of every `.py` file, sorted.
/// Hidden directories (leading dot) are not descended into.
fn collect_python_files(repo_root: &Path) -> Vec<String> {
    let mut files: Vec<String> = walkdir::WalkDir::new(repo_root)
        .into_iter()
        .filter_entry(|entry| {
            let name = entry.file_name().to_string_lossy();
            entry.depth() == 0 || !name.starts_with('.')
        })
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.file_type().is_file())
        .filter_map(|entry| {
            let rel = entry.path().strip_prefix(repo_root).ok()?;
            let rel = rel.to_string_lossy().replace('\\', "/");
            rel.ends_with(".py").then_some(rel)
        })
        .collect();
    files.sort();
    files
}

struct ParsedModule {
    syntax: ModuleSyntax,
    module_id: String,
    /// Node id per entity, parallel to `syntax.entities`.
    entity_ids: Vec<String>,
    /// alias -> absolute dotted target, later imports shadowing earlier ones.
    aliases: BTreeMap<String, String>,
    /// Top-level function name -> node id, same-module call resolution.
    local_functions: BTreeMap<String, String>,
    /// Top-level class name -> node id, same-module base resolution.
    local_classes: BTreeMap<String, String>,
}

impl ParsedModule {
    fn new(syntax: ModuleSyntax) -> Self {
        ParsedModule {
            module_id: EntityNode::node_id(NodeKind::Module, &syntax.module_qualified_name, 1),
            syntax,
            entity_ids: Vec::new(),
            aliases: BTreeMap::new(),
            local_functions: BTreeMap::new(),
            local_classes: BTreeMap::new(),
        }
    }
}

/// Global lookup tables built once after the structural sweep.
struct Indexes {
    /// Module qualified name -> node id.
    modules: BTreeMap<String, String>,
    /// Top-level function qualified name -> node id.
    functions: BTreeMap<String, String>,
    /// Top-level class qualified name -> node id.
    classes: BTreeMap<String, String>,
}

impl Indexes {
    fn collect(modules: &[ParsedModule]) -> Self {
        let mut index = Indexes {
            modules: BTreeMap::new(),
            functions: BTreeMap::new(),
            classes: BTreeMap::new(),
        };
        for module in modules {
            index.modules.insert(
                module.syntax.module_qualified_name.clone(),
                module.module_id.clone(),
            );
            for (entity, id) in module.syntax.entities.iter().zip(&module.entity_ids) {
                if entity.parent.is_some() {
                    continue;
                }
                match entity.kind {
                    EntityKind::Function => {
                        index
                            .functions
                            .insert(entity.qualified_name.clone(), id.clone());
                    }
                    EntityKind::Class => {
                        index
                            .classes
                            .insert(entity.qualified_name.clone(), id.clone());
                    }
                    EntityKind::Method => {}
                }
            }
        }
        index
    }
}

fn node_kind(kind: EntityKind) -> NodeKind {
    match kind {
        EntityKind::Class => NodeKind::Class,
        EntityKind::Function => NodeKind::Function,
        EntityKind::Method => NodeKind::Method,
    }
}

/// First traversal: directories, modules, declared entities, containment.
fn emit_structure(
    builder: &mut GraphBuilder,
    modules: &mut [ParsedModule],
) -> Result<(), GraphError> {
    for module in modules.iter_mut() {
        let syntax = &module.syntax;
        let mut parent_dir = ROOT_DIRECTORY_ID.to_string();
        let components: Vec<&str> = syntax.file_path.split('/').collect();
        let mut path_so_far = String::new();
        for dir in &components[..components.len() - 1] {
            if !path_so_far.is_empty() {
                path_so_far.push('/');
            }
            path_so_far.push_str(dir);
            let qualified = path_so_far.replace('/', ".");
            let dir_id = builder.upsert_node(EntityNode::new(
                NodeKind::Directory,
                *dir,
                qualified,
                path_so_far.clone(),
                0,
                0,
            ))?;
            builder.connect(&parent_dir, &dir_id, EdgeKind::Contains, None)?;
            parent_dir = dir_id;
        }

        let module_name = syntax
            .module_qualified_name
            .rsplit('.')
            .next()
            .unwrap_or(&syntax.module_qualified_name)
            .to_string();
        let module_node = EntityNode::new(
            NodeKind::Module,
            module_name,
            &syntax.module_qualified_name,
            &syntax.file_path,
            1,
            syntax.line_count.max(1),
        )
        .with_doc_head(&syntax.doc_head);
        let module_id = builder.upsert_node(module_node)?;
        builder.connect(&parent_dir, &module_id, EdgeKind::Contains, None)?;
        module.module_id = module_id.clone();

        let mut entity_ids: Vec<String> = Vec::with_capacity(syntax.entities.len());
        for entity in &syntax.entities {
            let node = EntityNode::new(
                node_kind(entity.kind),
                &entity.name,
                &entity.qualified_name,
                &syntax.file_path,
                entity.start_line,
                entity.end_line,
            )
            .with_doc_head(&entity.doc_head);
            let id = builder.upsert_node(node)?;
            let container = match entity.parent {
                Some(parent_index) => entity_ids[parent_index].clone(),
                None => module_id.clone(),
            };
            builder.connect(&container, &id, EdgeKind::Contains, None)?;
            entity_ids.push(id);
        }
        module.entity_ids = entity_ids;

        for import in &syntax.imports {
            if !import.alias.is_empty() {
                module
                    .aliases
                    .insert(import.alias.clone(), import.target.clone());
            }
        }
        for (entity, id) in syntax.entities.iter().zip(&module.entity_ids) {
            if entity.parent.is_none() {
                match entity.kind {
                    EntityKind::Function => {
                        module
                            .local_functions
                            .insert(entity.name.clone(), id.clone());
                    }
                    EntityKind::Class => {
                        module.local_classes.insert(entity.name.clone(), id.clone());
                    }
                    EntityKind::Method => {}
                }
            }
        }
    }
    Ok(())
}

/// Mirrored Imports edges between Module nodes, most specific target first.
fn emit_imports(
    builder: &mut GraphBuilder,
    modules: &[ParsedModule],
    indexes: &Indexes,
) -> Result<(), GraphError> {
    for module in modules {
        for import in &module.syntax.imports {
            let target = import
                .edge_candidates
                .iter()
                .find_map(|candidate| indexes.modules.get(candidate));
            if let Some(target_id) = target {
                if *target_id != module.module_id {
                    builder.connect(&module.module_id, target_id, EdgeKind::Imports, None)?;
                }
            }
        }
    }
    Ok(())
}

/// Resolve a raw callee name against the caller's module.
///
/// Two rules only: a bare name that is a top-level function defined or
/// imported in the caller's module, or `alias.f` where the alias maps to a
/// known module whose top-level function `f` exists. Everything else is
/// dropped: a missing call edge is cheaper than a wrong one.
fn resolve_callee(raw: &str, module: &ParsedModule, indexes: &Indexes) -> Option<String> {
    match raw.split_once('.') {
        Some((alias, name)) => {
            let target = module.aliases.get(alias)?;
            indexes.modules.get(target)?;
            indexes.functions.get(&format!("{target}.{name}")).cloned()
        }
        None => {
            if let Some(id) = module.local_functions.get(raw) {
                return Some(id.clone());
            }
            let target = module.aliases.get(raw)?;
            indexes.functions.get(target).cloned()
        }
    }
}

/// Second traversal: Calls/CalledBy edges. Returns the unresolved count.
fn resolve_calls(
    builder: &mut GraphBuilder,
    modules: &[ParsedModule],
    indexes: &Indexes,
) -> Result<usize, GraphError> {
    let mut unresolved = 0usize;
    for module in modules {
        for call in &module.syntax.call_sites {
            let caller_id = &module.entity_ids[call.caller];
            match resolve_callee(&call.callee_raw_name, module, indexes) {
                Some(callee_id) => {
                    builder.connect(caller_id, &callee_id, EdgeKind::Calls, None)?;
                }
                None => unresolved += 1,
            }
        }
    }
    Ok(unresolved)
}

fn resolve_base(raw: &str, module: &ParsedModule, indexes: &Indexes) -> Option<String> {
    match raw.split_once('.') {
        Some((alias, name)) => {
            let target = module.aliases.get(alias)?;
            indexes.modules.get(target)?;
            indexes.classes.get(&format!("{target}.{name}")).cloned()
        }
        None => {
            if let Some(id) = module.local_classes.get(raw) {
                return Some(id.clone());
            }
            let target = module.aliases.get(raw)?;
            indexes.classes.get(target).cloned()
        }
    }
}

/// Inherits edges, subclass to base, same two resolution rules as calls.
fn resolve_inherits(
    builder: &mut GraphBuilder,
    modules: &[ParsedModule],
    indexes: &Indexes,
) -> Result<usize, GraphError> {
    let mut unresolved = 0usize;
    for module in modules {
        for (entity, id) in module.syntax.entities.iter().zip(&module.entity_ids) {
            if entity.kind != EntityKind::Class {
                continue;
            }
            for base in &entity.bases {
                match resolve_base(base, module, indexes) {
                    Some(base_id) if base_id != *id => {
                        builder.connect(id, &base_id, EdgeKind::Inherits, None)?;
                    }
                    Some(_) => {}
                    None => unresolved += 1,
                }
            }
        }
    }
    Ok(unresolved)
}

/// One emitted Statement node paired with its source fact.
struct EmittedStatement<'a> {
    node_id: String,
    fact: Option<&'a StatementFact>,
}

/// Emit Statement nodes for one function: a signature pseudo-statement on
/// the `def` line housing parameter definitions, then one node per direct
/// child of the body. Nested definitions own their own entities and produce
/// no Statement node here.
fn emit_statement_nodes<'a>(
    builder: &mut GraphBuilder,
    entity: &'a EntityDecl,
    function_id: &str,
) -> Result<Vec<EmittedStatement<'a>>, GraphError> {
    let declared: BTreeSet<&str> = entity
        .body
        .iter()
        .flat_map(|fact| {
            fact.declares_global
                .iter()
                .chain(&fact.declares_nonlocal)
                .map(String::as_str)
        })
        .collect();

    let mut emitted = Vec::with_capacity(entity.body.len() + 1);
    let mut signature = EntityNode::new(
        NodeKind::Statement,
        "s0",
        format!("{}.s0", entity.qualified_name),
        entity_file(builder, function_id),
        entity.start_line,
        entity.start_line,
    );
    signature.defs = entity
        .params
        .iter()
        .filter(|p| !declared.contains(p.as_str()))
        .map(|p| VarDef {
            name: p.clone(),
            role: DefRole::Parameter,
        })
        .collect();
    let signature_id = builder.upsert_node(signature)?;
    builder.connect(function_id, &signature_id, EdgeKind::Contains, None)?;
    emitted.push(EmittedStatement {
        node_id: signature_id,
        fact: None,
    });

    let mut ordinal = 1usize;
    for fact in &entity.body {
        if matches!(
            fact.form,
            StatementForm::NestedDef | StatementForm::NestedClass
        ) {
            continue;
        }
        let mut node = EntityNode::new(
            NodeKind::Statement,
            format!("s{ordinal}"),
            format!("{}.s{ordinal}", entity.qualified_name),
            entity_file(builder, function_id),
            fact.start_line,
            fact.end_line,
        );
        node.defs = fact
            .defs
            .iter()
            .map(|(name, role)| VarDef {
                name: name.clone(),
                role: *role,
            })
            .collect();
        node.uses = fact.uses.clone();
        let id = builder.upsert_node(node)?;
        builder.connect(function_id, &id, EdgeKind::Contains, None)?;
        emitted.push(EmittedStatement {
            node_id: id,
            fact: Some(fact),
        });
        ordinal += 1;
    }
    Ok(emitted)
}

fn entity_file(builder: &GraphBuilder, node_id: &str) -> String {
    builder
        .node(node_id)
        .map(|n| n.file_path.clone())
        .unwrap_or_default()
}

/// Reaching-definition scan in textual order.
///
/// For each use of `v`, link from the latest statement before it that
/// defines `v` (the signature counts as position zero). A statement that
/// both uses and defines `v` links its use to the prior definition first,
/// then becomes the new last definition. Uses with no preceding in-function
/// definition (globals, builtins, imports) produce no edge.
fn link_def_use(
    builder: &mut GraphBuilder,
    entity: &EntityDecl,
    emitted: &[EmittedStatement<'_>],
) -> Result<(), GraphError> {
    let mut last_def: BTreeMap<&str, &str> = BTreeMap::new();
    let declared: BTreeSet<&str> = entity
        .body
        .iter()
        .flat_map(|fact| {
            fact.declares_global
                .iter()
                .chain(&fact.declares_nonlocal)
                .map(String::as_str)
        })
        .collect();
    for param in &entity.params {
        if !declared.contains(param.as_str()) {
            last_def.insert(param, &emitted[0].node_id);
        }
    }
    for statement in &emitted[1..] {
        let fact = statement.fact.expect("body statements carry facts");
        let uses: BTreeSet<&str> = fact.uses.iter().map(String::as_str).collect();
        for use_var in uses {
            if let Some(def_stmt) = last_def.get(use_var) {
                builder.connect(
                    def_stmt,
                    &statement.node_id,
                    EdgeKind::DataflowDefUse,
                    Some(use_var),
                )?;
            }
        }
        for (name, _role) in &fact.defs {
            last_def.insert(name, &statement.node_id);
        }
    }
    Ok(())
}

/// Second pass over every function/method body (full mode only).
fn run_dataflow_pass(
    builder: &mut GraphBuilder,
    modules: &[ParsedModule],
) -> Result<(), GraphError> {
    for module in modules {
        for (entity, id) in module.syntax.entities.iter().zip(&module.entity_ids) {
            if entity.kind == EntityKind::Class {
                continue;
            }
            let emitted = emit_statement_nodes(builder, entity, id)?;
            link_def_use(builder, entity, &emitted)?;
        }
    }
    Ok(())
}
