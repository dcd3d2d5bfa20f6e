/** Template submission forms, derived entirely from the template's declared
 * parameters: one input per parameter, `value` prefills, required fields
 * block submission while blank. Pure logic; the DOM layer just renders it. */

import type { TemplateWire } from "./model.js";

export interface FormField {
  name: string;
  required: boolean;
  prefill: string;
}

export interface FormDefinition {
  templateName: string;
  fields: FormField[];
}

export function buildTemplateForm(template: TemplateWire): FormDefinition {
  return {
    templateName: template.name,
    fields: template.parameters.map((p) => ({
      name: p.name,
      required: p.required,
      prefill: p.value === undefined || p.value === null ? "" : String(p.value),
    })),
  };
}

/** Required fields whose current value is blank; submission is blocked
 * client-side while any exist. */
export function missingRequired(
  form: FormDefinition,
  values: Record<string, string>,
): string[] {
  return form.fields
    .filter((f) => f.required && !(values[f.name] ?? "").trim())
    .map((f) => f.name);
}

export function canSubmit(form: FormDefinition, values: Record<string, string>): boolean {
  return missingRequired(form, values).length === 0;
}

/** The parameter map to POST: every non-blank input, verbatim. */
export function submissionParams(
  form: FormDefinition,
  values: Record<string, string>,
): Record<string, string> {
  const params: Record<string, string> = {};
  for (const field of form.fields) {
    const value = values[field.name] ?? "";
    if (value !== "") params[field.name] = value;
  }
  return params;
}
