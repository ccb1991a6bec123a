//! Prompt texts. Slots are written `{name}` and filled by [`fill`].

pub const OLP_SYSTEM: &str = r#"You are a helpful assistant that will generate plans for robots. You will be given the following:
1. A simple plan sketch, with which you will generate an entirely new plan sketch describing object states before (preconditions) and after (effects) actions are executed.
2. A list of objects available to the robot.

Note the following rules:
- Closely follow the task prompt. You must use all objects except any objects not related to the task.
- Be consistent with object names throughout the plan.
- All objects are on the table in front of the robot.
- Use one action verb per step. However, any steps involving "pick" or "place" must be written as a single step with the action "pick and place".
- Use as many states as possible to describe object preconditions and effects.
- Only use the states "in", "on", "under", or "contains" for describing objects. List them in the format "<relation> <obj>", where <relation> is a state and <obj> is a single object."#;

pub const OLP_INTRO: &str = "Your task will be to create a step-by-step plan for the following prompt: {task}. The following objects are available in the scene: {objects}. Say 'Okay!' if you understand the task.";

pub const OLP_SELECT: &str = "Below are a list of prototype recipes. You must select the closest one that is the closest to the given task prompt. Simply provide the number corresponding to the closest prototype.

{prototypes}";

pub const OLP_SKETCH: &str = "Generate a concise plan using the prototype as inspiration for the task: {task}. Follow all guidelines. Give evidence to support your plan logic.";

pub const OLP_OBJECTS: &str = r#"Make a Python list of used objects in the following format: ["object_1", "object_2", ...]'. If there are several instances of an object type, list them individually (e.g., ['first apple', 'second apple'] if two apples are used). Do not add any explanation."#;

pub const OLP_JSON: &str = r#"Format your generated plan as a JSON dictionary. List as many states as possible when describing each object's preconditions and effects. Each required object should match a key in "object_states": Be consistent with object names across actions. Use this JSON prototype as reference:

{prototype_json}"#;

pub const OLP_REPAIR: &str = "The JSON plan you generated has the following problems:
{problems}
Return the corrected plan as a JSON dictionary in the same format. Do not add any explanation.";

pub const ALIAS_GROUNDING: &str = "Map each object name used in a robot plan to exactly one object instance in the scene. Object names: {aliases}. Object instances: {instances}. Reply with a JSON dictionary from object name to object instance. Do not add any explanation.";

pub const LLM_PLANNER_SYSTEM: &str = "You are a helpful PDDL planning expert. Your job is to process a task prompt, a list of objects in the scene, and a list of statements describing the environment state, reason about how to solve the task, and produce a plan that solves the task.

A task plan has the format of:
    1. (<action_1> <arg1> <arg2>)
    2. (<action_2> <arg1> <arg2>)
    3. ...

Observe the following rules:
- In the task plan, you can only use these actions:
    1. (<pick> <obj1> <obj2>) - pick <obj1> that is on top of <obj2>; this causes nothing to be on <obj2>.
    2. (<place> <obj1> <obj2>) - place <obj1> on top of <obj2>; <obj2> must have nothing on it for <obj1> to be placed on it.
- Note the order of the arguments for both actions!
- The agent executing this task has a single hand: in order to pick up an object, the agent's hand must be free.";

pub const LLM_PLANNER_SCENARIO: &str = "There is a scenario with the following objects: {objects}. Please await further instructions.";

pub const LLM_PLANNER_GOAL: &str = "Your task is as follows: {task}. Transform this instruction into a PDDL goal specification in terms of 'on' relations. Do not add any explanation.";

pub const LLM_PLANNER_PLAN: &str = "Find a task plan in PDDL to achieve this goal given the initial state below. Only specify the list of actions needed.  Use the actions defined above. Do not add any explanation.

Initial state: {state}";

pub const LLM_PLUS_P: &str = "I want you to generate a PDDL problem file for robot problem solving. An example planning problem is:

{example}

Now I have a new planning problem and its description is as follows: These objects are on the table: {objects}. The current state of the world is: {state}.

Your goal is to achieve this task: {task}. Provide me with the problem PDDL file that describes the new planning problem directly without further explanations.";

pub const DELTA_DOMAIN: &str = "Role: You are an excellent PDDL domain file generator. Given a description of action knowledge in natural language, you can generate a PDDL domain file.

Example: {example}

Instruction: A new domain includes the following objects: {objects}. Please generate a corresponding new PDDL domain file for a robot. Do not add any explanation.";

pub const DELTA_PROBLEM: &str = "Role: You are an excellent PDDL problem file generator. Given a description of the robot's environment and a goal description, you can generate a PDDL problem file.

Example: {example}

Instruction: Now given a new description of the robot's scene and using the predicates in the previously generated PDDL domain file, please generate a new PDDL problem file for the task: {task}.

{state}";

pub const DELTA_SUBGOALS: &str = "Role: You are an excellent assistant in decomposing long-term goals. Given a PDDL problem file, you can decompose the long-term goal in a sequence of subgoals.

Example: {example}

Instruction: Given the PDDL problem previously generated, please decompose the long-term goal into a sequence of subgoals considering the predicates and actions from the previously generated PDDL domain file. Simply list the decomposed PDDL subgoals for each instruction in a similar format as the example and only 1 level deep.";

/// Substitutes every `{name}` slot. Slot values are inserted verbatim and
/// never rescanned, so JSON in one slot cannot clobber another.
pub fn fill(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = slots.iter().find(|(name, _)| {
            tail.strip_prefix('{').and_then(|t| t.strip_prefix(*name)).is_some_and(|t| t.starts_with('}'))
        });
        match hit {
            Some((name, value)) => {
                out.push_str(value);
                rest = &tail[name.len() + 2..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

/// Slot text for a sentence that the template terminates itself.
pub fn sentence(text: &str) -> &str {
    text.trim().trim_end_matches('.')
}

pub fn olp_intro(task: &str, objects: &[String]) -> String {
    fill(OLP_INTRO, &[("task", sentence(task)), ("objects", &objects.join(", "))])
}

pub fn olp_select(prototypes: &str) -> String {
    fill(OLP_SELECT, &[("prototypes", prototypes)])
}

pub fn olp_sketch(task: &str) -> String {
    fill(OLP_SKETCH, &[("task", sentence(task))])
}

pub fn olp_json(prototype_json: &str) -> String {
    fill(OLP_JSON, &[("prototype_json", prototype_json)])
}

pub fn olp_repair(problems: &[String]) -> String {
    let list: Vec<String> = problems.iter().map(|p| format!("- {p}")).collect();
    fill(OLP_REPAIR, &[("problems", &list.join("\n"))])
}

pub fn alias_grounding(aliases: &[String], instances: &[String]) -> String {
    let quote = |v: &[String]| serde_json::to_string(v).expect("string list serializes");
    fill(ALIAS_GROUNDING, &[("aliases", &quote(aliases)), ("instances", &quote(instances))])
}

pub fn llm_planner_scenario(objects: &[String]) -> String {
    fill(LLM_PLANNER_SCENARIO, &[("objects", &objects.join(", "))])
}

pub fn llm_planner_goal(task: &str) -> String {
    fill(LLM_PLANNER_GOAL, &[("task", sentence(task))])
}

pub fn llm_planner_plan(state: &str) -> String {
    fill(LLM_PLANNER_PLAN, &[("state", state)])
}

pub fn llm_plus_p(example: &str, objects: &[String], state: &str, task: &str) -> String {
    fill(
        LLM_PLUS_P,
        &[("example", example), ("objects", &objects.join(", ")), ("state", sentence(state)), ("task", sentence(task))],
    )
}

pub fn delta_domain(example: &str, objects: &[String]) -> String {
    fill(DELTA_DOMAIN, &[("example", example), ("objects", &objects.join(", "))])
}

pub fn delta_problem(example: &str, task: &str, state: &str) -> String {
    fill(DELTA_PROBLEM, &[("example", example), ("task", sentence(task)), ("state", state)])
}

pub fn delta_subgoals(example: &str) -> String {
    fill(DELTA_SUBGOALS, &[("example", example)])
}
