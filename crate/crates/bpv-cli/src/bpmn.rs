//! BPMN 2.0 XML import.
//!
//! Maps the supported structural subset onto ground process facts: tasks,
//! sub-processes (with boundary events), start/end/intermediate events,
//! exclusive/inclusive/parallel gateways, sequence flows, data objects with
//! direction-sensitive associations, and lanes. Element ids become fact
//! names; `name` attributes are ignored. Gateways classify as branch or
//! merge by their flow degrees. Control-flow constructs outside the
//! subset — event-based and complex gateways, call activities — are
//! errors, never silent skips; purely decorative content (documentation,
//! extension elements, diagram interchange) is ignored.

use bpv_core::error::{Error, Result};
use bpv_core::model::{ElementKind, ProcessSchema, SeqEdge};
use roxmltree::{Document, Node};

pub fn import_bpmn_xml(file: &str, xml: &str) -> Result<ProcessSchema> {
    let doc = Document::parse(xml).map_err(|e| {
        let row = e.pos().row as usize;
        Error::parse(file, row, format!("malformed XML: {e}"))
    })?;
    let root = doc.root_element();
    let mut processes = Vec::new();
    if root.tag_name().name() == "process" {
        processes.push(root);
    } else {
        processes
            .extend(root.children().filter(|n| n.is_element() && n.tag_name().name() == "process"));
    }
    if processes.is_empty() {
        return Err(Error::parse(file, 1, "no <process> element in the document"));
    }

    let mut imp =
        Importer { file, doc: &doc, schema: ProcessSchema::default(), gateways: Vec::new() };
    for proc in processes {
        let pid = imp.required_id(proc)?;
        let (start, end) = imp.walk_context(proc, &pid)?;
        imp.schema.processes.insert(pid, (start, end));
    }
    imp.classify_gateways()?;
    Ok(imp.schema)
}

#[derive(Clone, Copy)]
enum GatewayFamily {
    Exclusive,
    Inclusive,
    Parallel,
}

struct Importer<'a, 'input> {
    file: &'a str,
    doc: &'a Document<'input>,
    schema: ProcessSchema,
    /// Classified once every sequence flow is known.
    gateways: Vec<(String, GatewayFamily, usize)>,
}

impl<'a, 'input> Importer<'a, 'input> {
    fn row(&self, node: Node<'_, '_>) -> usize {
        self.doc.text_pos_at(node.range().start).row as usize
    }

    fn err(&self, node: Node<'_, '_>, msg: impl Into<String>) -> Error {
        Error::parse(self.file, self.row(node), msg)
    }

    fn required_id(&self, node: Node<'_, '_>) -> Result<String> {
        match node.attribute("id") {
            Some(id) if !id.trim().is_empty() => Ok(id.trim().to_string()),
            _ => Err(self.err(node, format!("<{}> requires an id", node.tag_name().name()))),
        }
    }

    fn kind(&mut self, id: &str, k: ElementKind) {
        self.schema.kinds.entry(id.to_string()).or_default().insert(k);
    }

    fn flow_node(&mut self, node: Node<'_, '_>, k: ElementKind) -> Result<String> {
        let id = self.required_id(node)?;
        self.kind(&id, k);
        Ok(id)
    }

    /// Import the flow elements directly inside `scope` into context `ctx`,
    /// returning the context's start and end event.
    fn walk_context(&mut self, scope: Node<'_, '_>, ctx: &str) -> Result<(String, String)> {
        let mut starts = Vec::new();
        let mut ends = Vec::new();
        for child in scope.children().filter(|c| c.is_element()) {
            let tag = child.tag_name().name();
            match tag {
                "startEvent" => starts.push(self.flow_node(child, ElementKind::StartEvent)?),
                "endEvent" => ends.push(self.flow_node(child, ElementKind::EndEvent)?),
                "intermediateCatchEvent" | "intermediateThrowEvent" => {
                    self.flow_node(child, ElementKind::IntEvent)?;
                }
                "boundaryEvent" => {
                    let id = self.flow_node(child, ElementKind::IntEvent)?;
                    let attached = child.attribute("attachedToRef").ok_or_else(|| {
                        self.err(child, format!("boundaryEvent `{id}` requires attachedToRef"))
                    })?;
                    self.schema.exceptions.push((id, attached.to_string(), ctx.to_string()));
                }
                "task" | "userTask" | "serviceTask" | "sendTask" | "receiveTask" | "manualTask"
                | "scriptTask" | "businessRuleTask" => {
                    let id = self.flow_node(child, ElementKind::Task)?;
                    self.data_associations(child, &id, ctx)?;
                }
                "subProcess" => {
                    let id = self.required_id(child)?;
                    self.kind(&id, ElementKind::Compound);
                    let (start, end) = self.walk_context(child, &id)?;
                    self.schema.compounds.insert(id.clone(), (start, end));
                    self.data_associations(child, &id, ctx)?;
                }
                "exclusiveGateway" => self.gateway(child, GatewayFamily::Exclusive)?,
                "inclusiveGateway" => self.gateway(child, GatewayFamily::Inclusive)?,
                "parallelGateway" => self.gateway(child, GatewayFamily::Parallel)?,
                "eventBasedGateway" | "complexGateway" | "callActivity" | "transaction"
                | "adHocSubProcess" => {
                    return Err(self.err(child, format!("unsupported element <{tag}>")));
                }
                "sequenceFlow" => {
                    let from = child
                        .attribute("sourceRef")
                        .ok_or_else(|| self.err(child, "sequenceFlow requires sourceRef"))?;
                    let to = child
                        .attribute("targetRef")
                        .ok_or_else(|| self.err(child, "sequenceFlow requires targetRef"))?;
                    self.schema.seq.push(SeqEdge {
                        from: from.to_string(),
                        to: to.to_string(),
                        process: ctx.to_string(),
                    });
                }
                "dataObject" | "dataObjectReference" => {
                    let id = self.required_id(child)?;
                    self.kind(&id, ElementKind::Item);
                }
                "laneSet" => self.lanes(child, ctx)?,
                _ => {}
            }
        }
        match (starts.len(), ends.len()) {
            (1, 1) => Ok((starts.pop().unwrap(), ends.pop().unwrap())),
            (s, e) => Err(self.err(
                scope,
                format!("`{ctx}` must have exactly one start and one end event, found {s} and {e}"),
            )),
        }
    }

    /// `dataInputAssociation`/`dataOutputAssociation` children: the
    /// direction decides which side of the activity the item sits on.
    fn data_associations(&mut self, activity: Node<'_, '_>, id: &str, ctx: &str) -> Result<()> {
        for assoc in activity.children().filter(|c| c.is_element()) {
            let (incoming, ref_tag) = match assoc.tag_name().name() {
                "dataInputAssociation" => (true, "sourceRef"),
                "dataOutputAssociation" => (false, "targetRef"),
                _ => continue,
            };
            for r in assoc.children().filter(|c| c.is_element() && c.tag_name().name() == ref_tag)
            {
                let item = r.text().unwrap_or("").trim().to_string();
                if item.is_empty() {
                    return Err(self.err(r, format!("empty <{ref_tag}> in a data association")));
                }
                let fact = (id.to_string(), item, ctx.to_string());
                if incoming {
                    self.schema.inputs.push(fact);
                } else {
                    self.schema.outputs.push(fact);
                }
            }
        }
        Ok(())
    }

    fn lanes(&mut self, lane_set: Node<'_, '_>, ctx: &str) -> Result<()> {
        for lane in lane_set.children().filter(|c| c.is_element() && c.tag_name().name() == "lane")
        {
            let lid = self.required_id(lane)?;
            self.kind(&lid, ElementKind::Participant);
            for child in lane.children().filter(|c| c.is_element()) {
                match child.tag_name().name() {
                    "flowNodeRef" => {
                        let node_id = child.text().unwrap_or("").trim().to_string();
                        if node_id.is_empty() {
                            return Err(self.err(child, "empty <flowNodeRef>"));
                        }
                        self.schema.assignments.push((node_id, lid.clone(), ctx.to_string()));
                    }
                    "childLaneSet" => self.lanes(child, ctx)?,
                    _ => {}
                }
            }
        }
        Ok(())
    }

    fn gateway(&mut self, node: Node<'_, '_>, family: GatewayFamily) -> Result<()> {
        let id = self.required_id(node)?;
        // Row is kept for the classification error; degree counting must
        // wait until every flow in the document has been read.
        self.gateways.push((id, family, self.row(node)));
        Ok(())
    }

    fn classify_gateways(&mut self) -> Result<()> {
        use ElementKind as K;
        let kinds: Vec<(String, ElementKind)> = self
            .gateways
            .iter()
            .map(|(id, family, row)| {
                let outs = self.schema.seq.iter().filter(|e| &e.from == id).count();
                let ins = self.schema.seq.iter().filter(|e| &e.to == id).count();
                if outs > 1 && ins > 1 {
                    return Err(Error::parse(
                        self.file,
                        *row,
                        format!("gateway `{id}` both merges and branches; split it in two"),
                    ));
                }
                let branch = match (family, ins, outs) {
                    (GatewayFamily::Exclusive, _, o) if o > 1 => K::ExcBranch,
                    (GatewayFamily::Inclusive, _, o) if o > 1 => K::IncBranch,
                    (GatewayFamily::Parallel, _, o) if o > 1 => K::ParBranch,
                    (GatewayFamily::Exclusive, ..) => K::ExcMerge,
                    (GatewayFamily::Inclusive, ..) => K::IncMerge,
                    (GatewayFamily::Parallel, ..) => K::ParMerge,
                };
                Ok((id.clone(), branch))
            })
            .collect::<Result<_>>()?;
        for (id, k) in kinds {
            self.kind(&id, k);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use bpv_core::model::well_formedness;

    const NS: &str = r#"xmlns="http://www.omg.org/spec/BPMN/20100524/MODEL""#;

    #[test]
    fn minimal_two_node_process() {
        let xml = format!(
            r#"<definitions {NS}><process id="p">
                 <startEvent id="s"/><endEvent id="e"/>
                 <sequenceFlow id="f" sourceRef="s" targetRef="e"/>
               </process></definitions>"#
        );
        let schema = import_bpmn_xml("min.bpmn", &xml).unwrap();
        assert_eq!(schema.processes.get("p"), Some(&("s".to_string(), "e".to_string())));
        assert_eq!(schema.seq.len(), 1);
        assert!(well_formedness(&schema).is_well_formed());
    }

    #[test]
    fn subprocess_boundary_lanes_and_data_import_well_formed() {
        let xml = format!(
            r#"<?xml version="1.0" encoding="UTF-8"?>
            <definitions {NS} targetNamespace="http://example.com/orders">
              <process id="p">
                <laneSet id="ls">
                  <lane id="clerk"><flowNodeRef>review</flowNodeRef></lane>
                </laneSet>
                <startEvent id="s"/>
                <task id="review">
                  <dataInputAssociation id="dia"><sourceRef>doc</sourceRef></dataInputAssociation>
                  <dataOutputAssociation id="doa"><targetRef>doc</targetRef></dataOutputAssociation>
                </task>
                <subProcess id="handle">
                  <startEvent id="hs"/>
                  <task id="inner"/>
                  <endEvent id="he"/>
                  <sequenceFlow id="hf1" sourceRef="hs" targetRef="inner"/>
                  <sequenceFlow id="hf2" sourceRef="inner" targetRef="he"/>
                </subProcess>
                <boundaryEvent id="oops" attachedToRef="handle"/>
                <exclusiveGateway id="g"/>
                <exclusiveGateway id="m"/>
                <endEvent id="e"/>
                <dataObject id="doc"/>
                <sequenceFlow id="f1" sourceRef="s" targetRef="review"/>
                <sequenceFlow id="f2" sourceRef="review" targetRef="g"/>
                <sequenceFlow id="f3" sourceRef="g" targetRef="handle"/>
                <sequenceFlow id="f4" sourceRef="g" targetRef="m"/>
                <sequenceFlow id="f5" sourceRef="handle" targetRef="m"/>
                <sequenceFlow id="f6" sourceRef="oops" targetRef="m"/>
                <sequenceFlow id="f7" sourceRef="m" targetRef="e"/>
              </process>
            </definitions>"#
        );
        let schema = import_bpmn_xml("orders.bpmn", &xml).unwrap();
        assert_eq!(schema.compounds.get("handle"), Some(&("hs".to_string(), "he".to_string())));
        assert!(schema
            .exceptions
            .contains(&("oops".to_string(), "handle".to_string(), "p".to_string())));
        assert!(schema.inputs.contains(&("review".to_string(), "doc".to_string(), "p".to_string())));
        assert!(schema
            .outputs
            .contains(&("review".to_string(), "doc".to_string(), "p".to_string())));
        assert!(schema
            .assignments
            .contains(&("review".to_string(), "clerk".to_string(), "p".to_string())));
        assert!(schema.kinds["clerk"].contains(&ElementKind::Participant));
        assert!(schema.kinds["g"].contains(&ElementKind::ExcBranch));
        assert!(schema.kinds["m"].contains(&ElementKind::ExcMerge));
        let report = well_formedness(&schema);
        assert!(report.is_well_formed(), "unexpected violations: {:?}", report.violations);
    }

    #[test]
    fn unsupported_constructs_are_errors() {
        let xml = format!(
            r#"<definitions {NS}><process id="p">
                 <startEvent id="s"/><eventBasedGateway id="g"/><endEvent id="e"/>
                 <sequenceFlow id="f1" sourceRef="s" targetRef="g"/>
                 <sequenceFlow id="f2" sourceRef="g" targetRef="e"/>
               </process></definitions>"#
        );
        let err = import_bpmn_xml("ev.bpmn", &xml).unwrap_err().to_string();
        assert!(err.contains("unsupported element <eventBasedGateway>"), "{err}");

        let mixed = format!(
            r#"<definitions {NS}><process id="p">
                 <startEvent id="s"/><startEvent id="s2"/><endEvent id="e"/>
                 <sequenceFlow id="f" sourceRef="s" targetRef="e"/>
               </process></definitions>"#
        );
        let err = import_bpmn_xml("two.bpmn", &mixed).unwrap_err().to_string();
        assert!(err.contains("exactly one start and one end event"), "{err}");

        let err = import_bpmn_xml("junk.bpmn", "<definitions><proc").unwrap_err().to_string();
        assert!(err.contains("malformed XML"), "{err}");
    }

    #[test]
    fn gateways_with_both_roles_are_rejected() {
        let xml = format!(
            r#"<definitions {NS}><process id="p">
                 <startEvent id="s"/><task id="a"/><task id="b"/><task id="c"/><task id="d"/>
                 <exclusiveGateway id="g"/><endEvent id="e"/><exclusiveGateway id="m"/>
                 <sequenceFlow id="f1" sourceRef="s" targetRef="a"/>
                 <sequenceFlow id="f2" sourceRef="a" targetRef="g"/>
                 <sequenceFlow id="f3" sourceRef="b" targetRef="g"/>
                 <sequenceFlow id="f4" sourceRef="g" targetRef="c"/>
                 <sequenceFlow id="f5" sourceRef="g" targetRef="d"/>
                 <sequenceFlow id="f6" sourceRef="c" targetRef="m"/>
                 <sequenceFlow id="f7" sourceRef="d" targetRef="m"/>
                 <sequenceFlow id="f8" sourceRef="m" targetRef="e"/>
               </process></definitions>"#
        );
        let err = import_bpmn_xml("mixed.bpmn", &xml).unwrap_err().to_string();
        assert!(err.contains("both merges and branches"), "{err}");
    }
}
